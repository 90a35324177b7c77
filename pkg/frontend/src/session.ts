/** Annotation session state machine, DOM-free so it is directly testable.
 *
 * One evaluator works a queue: fetch next task, judge it, advance.  The
 * in-flight guard makes each displayed task submit at most once no matter
 * how fast the buttons or keys are hit; a 409 shows a conflict notice and
 * skips forward; a network failure keeps the current task so no ballot is
 * lost.
 */

import {
  ApiError,
  FetchLike,
  Label,
  NetworkError,
  TaskPayload,
  fetchNextTask,
  fetchProgress,
  submitBallot,
} from "./api.js";

export interface TaskView {
  id: string;
  generated_text: string;
  ground_truth_text: string;
  support_preview: string[];
  position: { done: number; total: number };
}

export type Screen =
  | { kind: "setup" }
  | { kind: "loading" }
  | { kind: "task"; task: TaskView; notice: string | null }
  | { kind: "done"; completed: number }
  | { kind: "error"; message: string };

export interface SessionState {
  evaluatorId: string;
  baseUrl: string;
  pendingSubmission: boolean;
  completed: number;
}

export type SubmitOutcome = "submitted" | "conflict" | "retry" | "ignored";

const KEY_LABELS: Record<string, Label> = { "1": "REL", "2": "SWR", "3": "IRL" };

/** Keyboard shortcut mapping: 1/2/3 pick REL/SWR/IRL. */
export function keyToLabel(key: string): Label | null {
  return KEY_LABELS[key] ?? null;
}

export class Session {
  readonly state: SessionState;
  screen: Screen = { kind: "setup" };
  private listeners: Array<(screen: Screen, state: SessionState) => void> = [];
  private fetchImpl: FetchLike;

  constructor(baseUrl: string, evaluatorId: string, fetchImpl: FetchLike) {
    this.state = {
      evaluatorId,
      baseUrl: baseUrl.replace(/\/+$/, ""),
      pendingSubmission: false,
      completed: 0,
    };
    this.fetchImpl = fetchImpl;
  }

  onChange(listener: (screen: Screen, state: SessionState) => void): void {
    this.listeners.push(listener);
  }

  private show(screen: Screen): void {
    this.screen = screen;
    for (const listener of this.listeners) listener(screen, this.state);
  }

  /** Load the next open task; done-screen on 204, retry banner on failure. */
  async loadNext(notice: string | null = null): Promise<void> {
    this.show({ kind: "loading" });
    try {
      const progress = await fetchProgress(this.state.baseUrl, this.fetchImpl);
      const task = await fetchNextTask(
        this.state.baseUrl,
        this.state.evaluatorId,
        this.fetchImpl,
      );
      if (task === null) {
        this.show({ kind: "done", completed: this.state.completed });
        return;
      }
      this.show({
        kind: "task",
        task: {
          ...task,
          position: {
            done: this.state.completed,
            total: progress.open + progress.complete,
          },
        },
        notice,
      });
    } catch (err) {
      const message =
        err instanceof NetworkError
          ? "Cannot reach the server. Your progress is safe; retry when it is back."
          : `Server error: ${(err as ApiError).message}`;
      this.show({ kind: "error", message });
    }
  }

  /** Submit a judgment for the displayed task, exactly once per display. */
  async submit(label: Label): Promise<SubmitOutcome> {
    if (this.screen.kind !== "task" || this.state.pendingSubmission) {
      return "ignored";
    }
    const task = this.screen.task;
    this.state.pendingSubmission = true;
    try {
      const outcome = await submitBallot(
        this.state.baseUrl,
        { task_id: task.id, evaluator: this.state.evaluatorId, label },
        this.fetchImpl,
      );
      this.state.pendingSubmission = false;
      if (outcome === "created") {
        this.state.completed += 1;
        await this.loadNext();
        return "submitted";
      }
      // someone else completed the task first: note it and move on
      await this.loadNext("That task was already completed elsewhere; showing the next one.");
      return "conflict";
    } catch (err) {
      this.state.pendingSubmission = false;
      if (err instanceof NetworkError) {
        // keep the task on screen so the judgment can be retried
        this.show({
          kind: "task",
          task,
          notice: "Network failure, the ballot was not recorded. Try again.",
        });
        return "retry";
      }
      this.show({ kind: "error", message: (err as Error).message });
      return "retry";
    }
  }

  /** Route a keypress; returns true when it consumed the key. */
  async handleKey(key: string): Promise<boolean> {
    const label = keyToLabel(key);
    if (label === null || this.screen.kind !== "task") return false;
    await this.submit(label);
    return true;
  }
}
