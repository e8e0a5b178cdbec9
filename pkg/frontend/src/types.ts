// Wire types mirrored from the service API and the shared
// human_response.schema.json contract.

export interface WireCriterion {
  name: string;
  definition: string;
  scale_min: number;
  scale_max: number;
}

export interface WireSessionItem {
  blind_label: string;
  report_text: string;
}

export interface WireSession {
  session_id: string;
  items: WireSessionItem[];
  criteria: WireCriterion[];
}

export type AuthorGuess = "human" | "gpt35" | "gpt4";

export const GUESS_OPTIONS: { value: AuthorGuess; label: string }[] = [
  { value: "human", label: "Human" },
  { value: "gpt35", label: "GPT-3.5" },
  { value: "gpt4", label: "GPT-4" },
];

export interface ItemResponseBody {
  scores: Record<string, number>;
  author_guess: AuthorGuess;
}

export interface HumanResponseBody {
  session_id: string;
  rater_id: string;
  items: Record<string, ItemResponseBody>;
}

export interface SubmitAck {
  response_id: string;
  superseded: boolean;
  submitted_at: string;
}

export interface FieldError {
  field: string;
  code: string;
  message: string;
}

export interface ApiErrorBody {
  error: {
    code: string;
    message: string;
    fields?: FieldError[];
  };
}
