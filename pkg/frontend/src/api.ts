/** Typed client for the evaluation HTTP API.
 *
 * The console talks to exactly four documented routes and nothing else:
 * GET /api/tasks/next, POST /api/ballots, GET /api/progress, and (never
 * before the evaluator's own submission) no aggregate route at all.
 */

export type Label = "REL" | "SWR" | "IRL";

export interface TaskPayload {
  id: string;
  generated_text: string;
  ground_truth_text: string;
  support_preview: string[];
}

export interface Progress {
  open: number;
  complete: number;
  ballots_total: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Server answered with an unexpected status. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Could not reach the server at all (offline, refused, DNS). */
export class NetworkError extends Error {}

async function call(fetchImpl: FetchLike, url: string, init?: RequestInit): Promise<Response> {
  try {
    return await fetchImpl(url, init);
  } catch (err) {
    throw new NetworkError(err instanceof Error ? err.message : String(err));
  }
}

/** Next open task for this evaluator, or null when the queue is drained. */
export async function fetchNextTask(
  baseUrl: string,
  evaluator: string,
  fetchImpl: FetchLike,
): Promise<TaskPayload | null> {
  const url = `${baseUrl}/api/tasks/next?evaluator=${encodeURIComponent(evaluator)}`;
  const resp = await call(fetchImpl, url);
  if (resp.status === 204) return null;
  if (!resp.ok) throw new ApiError(resp.status, `tasks/next failed: ${resp.status}`);
  return (await resp.json()) as TaskPayload;
}

export type BallotOutcome = "created" | "conflict";

export async function submitBallot(
  baseUrl: string,
  ballot: { task_id: string; evaluator: string; label: Label },
  fetchImpl: FetchLike,
): Promise<BallotOutcome> {
  const resp = await call(fetchImpl, `${baseUrl}/api/ballots`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(ballot),
  });
  if (resp.status === 201) return "created";
  if (resp.status === 409) return "conflict";
  throw new ApiError(resp.status, `ballot rejected: ${resp.status}`);
}

export async function fetchProgress(baseUrl: string, fetchImpl: FetchLike): Promise<Progress> {
  const resp = await call(fetchImpl, `${baseUrl}/api/progress`);
  if (!resp.ok) throw new ApiError(resp.status, `progress failed: ${resp.status}`);
  return (await resp.json()) as Progress;
}
