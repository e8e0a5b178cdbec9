import { ApiError, submitResponse } from "./api";
import { GUESS_OPTIONS, type AuthorGuess, type HumanResponseBody, type WireSession } from "./types";

interface ItemDraft {
  scores: Map<string, number>;
  guess: AuthorGuess | null;
}

export interface FormController {
  root: HTMLElement;
  isComplete(): boolean;
  buildBody(): HumanResponseBody;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderError(root: HTMLElement, message: string): void {
  root.replaceChildren();
  const banner = el("div", "error-banner", message);
  banner.setAttribute("role", "alert");
  root.appendChild(banner);
}

/** Render the blind evaluation form. Submission stays disabled until every
 * score and guess is set and a rater handle has been entered. */
export function renderForm(
  root: HTMLElement,
  session: WireSession,
  options: { baseUrl?: string } = {},
): FormController {
  const baseUrl = options.baseUrl ?? "";
  const drafts = new Map<string, ItemDraft>();
  for (const item of session.items) {
    drafts.set(item.blind_label, { scores: new Map(), guess: null });
  }
  let inFlight = false;

  root.replaceChildren();
  const form = el("form", "annotation-form");
  form.addEventListener("submit", (event) => event.preventDefault());

  const intro = el("section", "criteria-help");
  intro.appendChild(el("h2", undefined, "Evaluation criteria"));
  for (const criterion of session.criteria) {
    const line = el("p", "criterion-definition");
    line.dataset.criterion = criterion.name;
    line.textContent = `${capitalize(criterion.name)} (${criterion.scale_min}-${criterion.scale_max}): ${criterion.definition}`;
    intro.appendChild(line);
  }
  form.appendChild(intro);

  for (const item of session.items) {
    const panel = el("section", "report-panel");
    panel.dataset.label = item.blind_label;
    panel.appendChild(el("h2", undefined, item.blind_label));
    const text = el("pre", "report-text", item.report_text);
    panel.appendChild(text);

    for (const criterion of session.criteria) {
      const row = el("label", "score-row");
      row.appendChild(el("span", "score-name", capitalize(criterion.name)));
      const select = el("select", "score-input");
      select.dataset.label = item.blind_label;
      select.dataset.criterion = criterion.name;
      select.appendChild(new Option("score...", ""));
      for (let value = criterion.scale_min; value <= criterion.scale_max; value++) {
        select.appendChild(new Option(String(value), String(value)));
      }
      select.addEventListener("change", () => {
        const draft = drafts.get(item.blind_label)!;
        if (select.value === "") {
          draft.scores.delete(criterion.name);
        } else {
          draft.scores.set(criterion.name, Number(select.value));
        }
        clearFieldError(select);
        refresh();
      });
      row.appendChild(select);
      panel.appendChild(row);
    }

    const guessRow = el("label", "guess-row");
    guessRow.appendChild(el("span", "score-name", "Who wrote this report?"));
    const guess = el("select", "guess-input");
    guess.dataset.label = item.blind_label;
    guess.appendChild(new Option("guess...", ""));
    for (const option of GUESS_OPTIONS) {
      guess.appendChild(new Option(option.label, option.value));
    }
    guess.addEventListener("change", () => {
      drafts.get(item.blind_label)!.guess = (guess.value || null) as AuthorGuess | null;
      clearFieldError(guess);
      refresh();
    });
    guessRow.appendChild(guess);
    panel.appendChild(guessRow);

    form.appendChild(panel);
  }

  const footer = el("section", "form-footer");
  const raterLabel = el("label", "rater-row");
  raterLabel.appendChild(el("span", "score-name", "Your anonymous handle"));
  const rater = el("input", "rater-input");
  rater.type = "text";
  rater.placeholder = "e.g. rater-42";
  rater.addEventListener("input", refresh);
  raterLabel.appendChild(rater);
  footer.appendChild(raterLabel);

  const hint = el("p", "submit-hint", "Fill in every score and guess to enable submission.");
  footer.appendChild(hint);

  const submit = el("button", "submit-button", "Submit evaluation");
  submit.type = "submit";
  submit.disabled = true;
  footer.appendChild(submit);

  const status = el("p", "submit-status", "");
  footer.appendChild(status);
  form.appendChild(footer);
  root.appendChild(form);

  function isComplete(): boolean {
    if (!rater.value.trim()) return false;
    for (const draft of drafts.values()) {
      if (draft.scores.size !== session.criteria.length || draft.guess === null) {
        return false;
      }
    }
    return true;
  }

  function refresh(): void {
    const ready = isComplete();
    submit.disabled = !ready || inFlight;
    hint.style.display = ready ? "none" : "";
  }

  function buildBody(): HumanResponseBody {
    const items: HumanResponseBody["items"] = {};
    for (const [label, draft] of drafts) {
      items[label] = {
        scores: Object.fromEntries(draft.scores),
        author_guess: draft.guess as AuthorGuess,
      };
    }
    return { session_id: session.session_id, rater_id: rater.value.trim(), items };
  }

  function clearFieldError(input: HTMLElement): void {
    input.classList.remove("field-error");
    const note = input.parentElement?.querySelector(".field-error-message");
    note?.remove();
  }

  function attachFieldErrors(errors: { field: string; message: string }[]): void {
    for (const fieldError of errors) {
      // fields look like "items.Report 2.scores.excitement"
      const match = fieldError.field.match(/^items\.(Report \d)\.(?:scores\.(\w+)|author_guess)/);
      if (!match) continue;
      const [, label, criterion] = match;
      const selector = criterion
        ? `select[data-label="${label}"][data-criterion="${criterion}"]`
        : `select.guess-input[data-label="${label}"]`;
      const input = form.querySelector<HTMLSelectElement>(selector);
      if (!input) continue;
      input.classList.add("field-error");
      const note = el("span", "field-error-message", fieldError.message);
      input.parentElement?.appendChild(note);
    }
  }

  form.addEventListener("submit", async () => {
    if (!isComplete() || inFlight) return;
    inFlight = true;
    refresh();
    status.textContent = "Submitting...";
    try {
      const ack = await submitResponse(buildBody(), baseUrl);
      form.querySelectorAll("select, input, button").forEach((node) => {
        (node as HTMLSelectElement).disabled = true;
      });
      status.className = "submit-status success";
      status.textContent = ack.superseded
        ? `Thanks! Your previous submission was replaced (${ack.response_id}).`
        : `Thanks! Your evaluation was stored (${ack.response_id}).`;
    } catch (err) {
      inFlight = false;
      refresh();
      if (err instanceof ApiError) {
        status.className = "submit-status failure";
        status.textContent = err.message;
        attachFieldErrors(err.fields);
      } else {
        status.className = "submit-status failure";
        status.textContent = "Network problem while submitting; please try again.";
      }
    }
  });

  refresh();
  return { root, isComplete, buildBody };
}

function capitalize(word: string): string {
  return word.charAt(0).toUpperCase() + word.slice(1);
}
