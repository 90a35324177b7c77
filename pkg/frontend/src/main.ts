import { Session } from "./session.js";
import { mount } from "./ui.js";

const EVALUATOR_KEY = "metasynth-evaluator";

function evaluatorId(): string {
  let id = localStorage.getItem(EVALUATOR_KEY);
  while (!id || !id.trim()) {
    id = window.prompt("Evaluator id for this session:") ?? "";
  }
  localStorage.setItem(EVALUATOR_KEY, id.trim());
  return id.trim();
}

function main(): void {
  const container = document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  const baseUrl = localStorage.getItem("metasynth-server") ?? window.location.origin;
  const session = new Session(baseUrl, evaluatorId(), fetch.bind(window));
  mount(session, container);
  void session.loadNext();
}

main();
