/** Rendering for the console: pure markup builders plus a thin DOM binding.
 *
 * The generated abstract and the ground truth sit side by side, support
 * abstracts collapse behind <details>, and the three judgment buttons
 * carry their keyboard shortcuts.
 */

import { Label } from "./api.js";
import { Screen, Session, SessionState } from "./session.js";

const LABEL_BUTTONS: Array<{ label: Label; key: string; text: string; hint: string }> = [
  { label: "REL", key: "1", text: "Relevant", hint: "closely matches the ground truth" },
  { label: "SWR", key: "2", text: "Somewhat relevant", hint: "acceptable similarity" },
  { label: "IRL", key: "3", text: "Irrelevant", hint: "missing or unrelated content" },
];

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderScreen(screen: Screen, state: SessionState): string {
  switch (screen.kind) {
    case "setup":
      return `<section class="notice">Starting session…</section>`;
    case "loading":
      return `<section class="notice">Loading next task…</section>`;
    case "error":
      return `
        <section class="banner banner-error">
          <p>${escapeHtml(screen.message)}</p>
          <button id="retry" type="button">Retry</button>
        </section>`;
    case "done":
      return `
        <section class="done-screen">
          <h2>All tasks reviewed</h2>
          <p>You judged ${screen.completed} task${screen.completed === 1 ? "" : "s"} this session. Thank you.</p>
        </section>`;
    case "task": {
      const t = screen.task;
      const supports = t.support_preview
        .map(
          (text, i) => `
          <details class="support">
            <summary>Support abstract ${i + 1}</summary>
            <p>${escapeHtml(text)}</p>
          </details>`,
        )
        .join("");
      const buttons = LABEL_BUTTONS.map(
        (b) => `
        <button type="button" class="judge judge-${b.label.toLowerCase()}"
                data-label="${b.label}" title="${b.hint}">
          <kbd>${b.key}</kbd> ${b.text}
        </button>`,
      ).join("");
      const notice = screen.notice
        ? `<div class="banner banner-info">${escapeHtml(screen.notice)}</div>`
        : "";
      return `
        ${notice}
        <header class="task-header">
          <span class="task-id">${escapeHtml(t.id)}</span>
          <span class="position">${t.position.done} of ${t.position.total} done · ${escapeHtml(state.evaluatorId)}</span>
        </header>
        <section class="compare">
          <article class="pane">
            <h3>Generated abstract</h3>
            <p>${escapeHtml(t.generated_text)}</p>
          </article>
          <article class="pane">
            <h3>Ground truth</h3>
            <p>${escapeHtml(t.ground_truth_text)}</p>
          </article>
        </section>
        <section class="supports">${supports}</section>
        <footer class="judgments">${buttons}</footer>`;
    }
  }
}

/** Wire a session to a container element; re-renders on every state change. */
export function mount(session: Session, container: HTMLElement): void {
  const render = (screen: Screen, state: SessionState) => {
    container.innerHTML = renderScreen(screen, state);
  };
  session.onChange(render);
  render(session.screen, session.state);

  container.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const button = target.closest<HTMLButtonElement>("button[data-label]");
    if (button) {
      void session.submit(button.dataset.label as Label);
      return;
    }
    if (target.closest("#retry")) {
      void session.loadNext();
    }
  });

  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    void session.handleKey(event.key);
  });
}
