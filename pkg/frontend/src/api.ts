import type { ApiErrorBody, HumanResponseBody, SubmitAck, WireSession } from "./types";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly fields: { field: string; code: string; message: string }[];

  constructor(status: number, body: ApiErrorBody | null) {
    super(body?.error.message ?? `request failed with status ${status}`);
    this.status = status;
    this.code = body?.error.code ?? "network_error";
    this.fields = body?.error.fields ?? [];
  }
}

async function errorFrom(resp: Response): Promise<ApiError> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    body = null;
  }
  return new ApiError(resp.status, body);
}

export async function fetchSession(sessionId: string, baseUrl = ""): Promise<WireSession> {
  const resp = await fetch(`${baseUrl}/api/sessions/${encodeURIComponent(sessionId)}`);
  if (!resp.ok) {
    throw await errorFrom(resp);
  }
  return (await resp.json()) as WireSession;
}

export async function submitResponse(
  body: HumanResponseBody,
  baseUrl = "",
): Promise<SubmitAck> {
  const resp = await fetch(
    `${baseUrl}/api/sessions/${encodeURIComponent(body.session_id)}/responses`,
    {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    },
  );
  if (resp.status !== 201) {
    throw await errorFrom(resp);
  }
  return (await resp.json()) as SubmitAck;
}
