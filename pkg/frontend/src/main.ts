import { ApiError, fetchSession } from "./api";
import { renderError, renderForm } from "./form";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const sessionId = new URLSearchParams(window.location.search).get("session");
  if (!sessionId) {
    renderError(root, "No session id. Open this page as /?session=<id>.");
    return;
  }
  try {
    const session = await fetchSession(sessionId);
    renderForm(root, session);
  } catch (err) {
    if (err instanceof ApiError && err.code === "unknown_session") {
      renderError(root, `Session "${sessionId}" was not found.`);
    } else {
      renderError(root, "Could not reach the annotation service. Please try again later.");
    }
  }
}

void boot();
