import { describe, expect, it } from "vitest";

import { FetchLike, Label, TaskPayload } from "../src/api.js";
import { Session, keyToLabel } from "../src/session.js";
import { renderScreen } from "../src/ui.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

interface MockApi {
  fetchImpl: FetchLike;
  posts: Array<{ task_id: string; evaluator: string; label: Label }>;
}

/** In-memory evaluation API with the documented route semantics. */
function mockApi(tasks: TaskPayload[], requiredBallots = 3): MockApi {
  const ballots = new Map<string, Map<string, Label>>(
    tasks.map((t) => [t.id, new Map()]),
  );
  const posts: MockApi["posts"] = [];

  const isComplete = (taskId: string) =>
    (ballots.get(taskId)?.size ?? 0) >= requiredBallots;

  const fetchImpl: FetchLike = async (url, init) => {
    const u = new URL(url, "http://mock");
    if (u.pathname === "/api/progress") {
      const complete = tasks.filter((t) => isComplete(t.id)).length;
      return jsonResponse({
        open: tasks.length - complete,
        complete,
        ballots_total: [...ballots.values()].reduce((n, m) => n + m.size, 0),
      });
    }
    if (u.pathname === "/api/tasks/next") {
      const evaluator = u.searchParams.get("evaluator") ?? "";
      const candidates = tasks
        .filter((t) => !isComplete(t.id) && !ballots.get(t.id)!.has(evaluator))
        .sort(
          (a, b) =>
            ballots.get(a.id)!.size - ballots.get(b.id)!.size ||
            a.id.localeCompare(b.id),
        );
      const next = candidates[0];
      if (!next) return new Response(null, { status: 204 });
      return jsonResponse(next);
    }
    if (u.pathname === "/api/ballots") {
      const body = JSON.parse(String(init?.body)) as MockApi["posts"][number];
      posts.push(body);
      const taskBallots = ballots.get(body.task_id);
      if (!taskBallots) return jsonResponse({ detail: "unknown" }, 404);
      if (isComplete(body.task_id) || taskBallots.has(body.evaluator)) {
        return jsonResponse({ detail: "conflict" }, 409);
      }
      taskBallots.set(body.evaluator, body.label);
      return jsonResponse({ task_id: body.task_id, state: "open" }, 201);
    }
    throw new Error(`unexpected route ${u.pathname}`);
  };
  return { fetchImpl, posts };
}

function makeTasks(n: number): TaskPayload[] {
  return Array.from({ length: n }, (_, i) => ({
    id: `t-c${i + 1}`,
    generated_text: `generated abstract ${i + 1}`,
    ground_truth_text: `ground truth ${i + 1}`,
    support_preview: [`support a ${i + 1}`, `support b ${i + 1}`],
  }));
}

describe("keyboard shortcuts", () => {
  it("maps 1/2/3 to REL/SWR/IRL and nothing else", () => {
    expect(keyToLabel("1")).toBe("REL");
    expect(keyToLabel("2")).toBe("SWR");
    expect(keyToLabel("3")).toBe("IRL");
    expect(keyToLabel("4")).toBeNull();
    expect(keyToLabel("Enter")).toBeNull();
  });

  it("handleKey posts the mapped label", async () => {
    const api = mockApi(makeTasks(1));
    const session = new Session("http://mock", "e1", api.fetchImpl);
    await session.loadNext();
    expect(await session.handleKey("3")).toBe(true);
    expect(api.posts).toHaveLength(1);
    expect(api.posts[0]!.label).toBe("IRL");
  });

  it("keys are inert without a displayed task", async () => {
    const api = mockApi([]);
    const session = new Session("http://mock", "e1", api.fetchImpl);
    await session.loadNext(); // straight to done-screen
    expect(await session.handleKey("1")).toBe(false);
    expect(api.posts).toHaveLength(0);
  });
});

describe("queue flow", () => {
  it("renders the first task with its position", async () => {
    const session = new Session("http://mock", "e1", mockApi(makeTasks(5)).fetchImpl);
    await session.loadNext();
    expect(session.screen.kind).toBe("task");
    if (session.screen.kind === "task") {
      expect(session.screen.task.position).toEqual({ done: 0, total: 5 });
    }
  });

  it("shows the done-screen on 204", async () => {
    const session = new Session("http://mock", "e1", mockApi([]).fetchImpl);
    await session.loadNext();
    expect(session.screen).toEqual({ kind: "done", completed: 0 });
  });

  it("a full five-task session drains the queue", async () => {
    const api = mockApi(makeTasks(5));
    const session = new Session("http://mock", "e1", api.fetchImpl);
    await session.loadNext();
    const labels: Label[] = ["REL", "SWR", "IRL", "REL", "SWR"];
    let i = 0;
    while (session.screen.kind === "task" && i < 10) {
      await session.submit(labels[i % labels.length]!);
      i += 1;
    }
    expect(session.screen).toEqual({ kind: "done", completed: 5 });
    expect(api.posts).toHaveLength(5);
    expect(new Set(api.posts.map((p) => p.task_id)).size).toBe(5);
  });
});

describe("exactly-once submission", () => {
  it("rapid double submit produces a single POST", async () => {
    const api = mockApi(makeTasks(2));
    const session = new Session("http://mock", "e1", api.fetchImpl);
    await session.loadNext();
    const [first, second] = await Promise.all([
      session.submit("REL"),
      session.submit("REL"),
    ]);
    expect([first, second].sort()).toEqual(["ignored", "submitted"]);
    // exactly one ballot for the first task; the double press never leaked
    // a second POST to it or to the follow-up task
    expect(api.posts).toHaveLength(1);
  });

  it("submit without a task is ignored", async () => {
    const api = mockApi([]);
    const session = new Session("http://mock", "e1", api.fetchImpl);
    await session.loadNext();
    expect(await session.submit("REL")).toBe("ignored");
    expect(api.posts).toHaveLength(0);
  });
});

describe("conflict and failure handling", () => {
  it("409 shows a conflict notice and advances", async () => {
    const tasks = makeTasks(2);
    const api = mockApi(tasks);
    // another evaluator pool completes the first task out from under e4
    for (const e of ["x1", "x2", "x3"]) {
      await api.fetchImpl("http://mock/api/ballots", {
        method: "POST",
        body: JSON.stringify({ task_id: tasks[0]!.id, evaluator: e, label: "REL" }),
      });
    }
    const postsBefore = api.posts.length;
    const session = new Session("http://mock", "e4", api.fetchImpl);
    await session.loadNext();
    // the session has the second task on screen (first is complete), so
    // force a conflicting ballot against the completed one
    if (session.screen.kind === "task") {
      session.screen.task = { ...session.screen.task, id: tasks[0]!.id };
    }
    const outcome = await session.submit("SWR");
    expect(outcome).toBe("conflict");
    expect(api.posts).toHaveLength(postsBefore + 1);
    expect(session.screen.kind).toBe("task");
    if (session.screen.kind === "task") {
      expect(session.screen.notice).toMatch(/already completed/);
      expect(session.screen.task.id).toBe(tasks[1]!.id);
    }
  });

  it("network failure on load shows the retry banner", async () => {
    const failing: FetchLike = async () => {
      throw new TypeError("fetch failed");
    };
    const session = new Session("http://mock", "e1", failing);
    await session.loadNext();
    expect(session.screen.kind).toBe("error");
  });

  it("network failure on submit keeps the task so no ballot is lost", async () => {
    const api = mockApi(makeTasks(1));
    let failNext = false;
    const flaky: FetchLike = async (url, init) => {
      if (failNext && String(url).includes("/api/ballots")) {
        failNext = false;
        throw new TypeError("connection reset");
      }
      return api.fetchImpl(url, init);
    };
    const session = new Session("http://mock", "e1", flaky);
    await session.loadNext();
    const taskId = session.screen.kind === "task" ? session.screen.task.id : "";
    failNext = true;
    expect(await session.submit("REL")).toBe("retry");
    expect(session.screen.kind).toBe("task");
    if (session.screen.kind === "task") {
      expect(session.screen.task.id).toBe(taskId);
      expect(session.screen.notice).toMatch(/not recorded/);
    }
    // the retry succeeds and the session moves on
    expect(await session.submit("REL")).toBe("submitted");
    expect(session.screen).toEqual({ kind: "done", completed: 1 });
  });
});

describe("rendering", () => {
  const state = {
    evaluatorId: "e1",
    baseUrl: "http://mock",
    pendingSubmission: false,
    completed: 2,
  };

  it("task screen shows both panes, supports, and shortcut buttons", () => {
    const html = renderScreen(
      {
        kind: "task",
        task: {
          id: "t-c1",
          generated_text: "machine <text>",
          ground_truth_text: "human text",
          support_preview: ["support one", "support two"],
          position: { done: 2, total: 5 },
        },
        notice: null,
      },
      state,
    );
    expect(html).toContain("Generated abstract");
    expect(html).toContain("Ground truth");
    expect(html).toContain("machine &lt;text&gt;"); // escaped
    expect(html).toContain("2 of 5 done");
    expect((html.match(/<details/g) ?? []).length).toBe(2);
    for (const [key, label] of [["1", "REL"], ["2", "SWR"], ["3", "IRL"]]) {
      expect(html).toContain(`data-label="${label}"`);
      expect(html).toContain(`<kbd>${key}</kbd>`);
    }
    // never any aggregate or other-evaluator content
    expect(html).not.toMatch(/ballot|aggregate|vote/i);
  });

  it("done screen reports the completed count", () => {
    const html = renderScreen({ kind: "done", completed: 5 }, state);
    expect(html).toContain("All tasks reviewed");
    expect(html).toContain("5 tasks");
  });

  it("error screen offers a retry", () => {
    const html = renderScreen({ kind: "error", message: "Cannot reach" }, state);
    expect(html).toContain("Cannot reach");
    expect(html).toContain('id="retry"');
  });
});
