"""Start the annotation service on a fixture store for UI tests.

Creates one blind session, prints "READY <session_id>" once the app is
constructed, then serves until killed.
"""

import argparse

import uvicorn

from badge.human_eval import ResponseStore, create_session
from badge.service import create_app

REPORTS = [
    ("human", "A hand-written recap: the favourite rallied from a set down, "
              "closing the decider 21-17 with a sharp cross-court finish."),
    ("gpt35", "A generated recap of the same final: momentum flipped midway "
              "through set two, and the decider stayed level until 17-all."),
    ("gpt4", "A second generated recap: disciplined shot selection and late "
             "net pressure decided a final of fine margins."),
]


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--store", required=True)
    args = parser.parse_args()

    store = ResponseStore(args.store)
    session = create_session(REPORTS, seed=13, match_id="ui-fixture", session_id="ui-session")
    store.save_session(session)
    app = create_app(store)
    print(f"READY {session.session_id}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="error")


if __name__ == "__main__":
    main()
