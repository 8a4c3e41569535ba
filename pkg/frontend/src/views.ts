// DOM builders for the three annotator views.  Every form enforces the
// submit gate: the submit button stays disabled until all required controls
// hold a value, and the handler re-checks before posting.

import type { PrefTaskView, QCTaskView, SeedCandidate } from "./api.js";
import { renderTableGrid } from "./tables.js";

export const LIKERT_SCALE = [1, 2, 3, 4, 5] as const;
export const PREF_CHOICES = [
  { value: "win", label: "Left is better" },
  { value: "tie", label: "Tie" },
  { value: "loss", label: "Right is better" },
] as const;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function radioRow(
  doc: Document,
  groupName: string,
  options: { value: string; label: string }[],
): HTMLElement {
  const row = el(doc, "div", "choice-row");
  for (const option of options) {
    const label = el(doc, "label", "choice");
    const input = doc.createElement("input");
    input.type = "radio";
    input.name = groupName;
    input.value = option.value;
    label.appendChild(input);
    label.appendChild(doc.createTextNode(option.label));
    row.appendChild(label);
  }
  return row;
}

function formValues(form: HTMLFormElement, groups: string[]): Record<string, string> | null {
  const values: Record<string, string> = {};
  for (const group of groups) {
    const checked = form.querySelector<HTMLInputElement>(
      `input[name="${group}"]:checked`,
    );
    if (!checked) return null;
    values[group] = checked.value;
  }
  return values;
}

function wireGate(form: HTMLFormElement, submit: HTMLButtonElement, groups: string[]): void {
  const update = () => {
    submit.disabled = formValues(form, groups) === null;
  };
  form.addEventListener("change", update);
  update();
}

function tablesSection(doc: Document, serialized: string[]): HTMLElement {
  const section = el(doc, "section", "tables");
  for (const s of serialized) {
    section.appendChild(renderTableGrid(doc, s));
  }
  return section;
}

export function qcView(
  doc: Document,
  task: QCTaskView,
  onSubmit: (values: Record<string, number>) => void,
): HTMLElement {
  const root = el(doc, "div", "task qc-task");
  root.appendChild(tablesSection(doc, task.tables));
  root.appendChild(el(doc, "h2", "question", task.question));
  root.appendChild(el(doc, "p", "insight", task.insight));

  const form = el(doc, "form");
  const groups: string[] = [];
  task.criteria.forEach((criterion, i) => {
    const group = `criterion-${i}`;
    groups.push(group);
    const fieldset = el(doc, "fieldset", "likert-row");
    fieldset.dataset.criterion = criterion;
    fieldset.appendChild(el(doc, "legend", undefined, criterion));
    fieldset.appendChild(
      radioRow(
        doc,
        group,
        LIKERT_SCALE.map((v) => ({ value: String(v), label: String(v) })),
      ),
    );
    form.appendChild(fieldset);
  });

  const submit = el(doc, "button", "submit", "Submit ratings");
  submit.type = "submit";
  form.appendChild(submit);
  wireGate(form, submit, groups);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const raw = formValues(form, groups);
    if (raw === null) return; // gate: incomplete forms never submit
    const values: Record<string, number> = {};
    task.criteria.forEach((criterion, i) => {
      values[criterion] = Number(raw[`criterion-${i}`]);
    });
    onSubmit(values);
  });
  root.appendChild(form);
  return root;
}

export function prefView(
  doc: Document,
  task: PrefTaskView,
  onSubmit: (values: Record<string, string>) => void,
): HTMLElement {
  const root = el(doc, "div", "task pref-task");
  if (task.tables.length) root.appendChild(tablesSection(doc, task.tables));
  root.appendChild(el(doc, "h2", "question", task.question));

  const pair = el(doc, "div", "pair");
  const left = el(doc, "article", "candidate left");
  left.appendChild(el(doc, "h3", undefined, "Left"));
  left.appendChild(el(doc, "p", "insight", task.insight_left));
  const right = el(doc, "article", "candidate right");
  right.appendChild(el(doc, "h3", undefined, "Right"));
  right.appendChild(el(doc, "p", "insight", task.insight_right));
  pair.appendChild(left);
  pair.appendChild(right);
  root.appendChild(pair);

  const form = el(doc, "form");
  const groups: string[] = [];
  for (const dimension of task.dimensions) {
    const group = `dim-${dimension}`;
    groups.push(group);
    const fieldset = el(doc, "fieldset", "pref-row");
    fieldset.dataset.dimension = dimension;
    fieldset.appendChild(el(doc, "legend", undefined, `Which is better on ${dimension}?`));
    fieldset.appendChild(radioRow(doc, group, [...PREF_CHOICES]));
    form.appendChild(fieldset);
  }

  const submit = el(doc, "button", "submit", "Submit judgment");
  submit.type = "submit";
  form.appendChild(submit);
  wireGate(form, submit, groups);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const raw = formValues(form, groups);
    if (raw === null) return;
    const values: Record<string, string> = {};
    for (const dimension of task.dimensions) {
      values[dimension] = raw[`dim-${dimension}`];
    }
    onSubmit(values);
  });
  root.appendChild(form);
  return root;
}

export function seedReviewView(
  doc: Document,
  candidates: SeedCandidate[],
  onSubmit: (decisions: { id: string; accept: boolean }[]) => void,
): HTMLElement {
  const root = el(doc, "div", "task seed-review");
  root.appendChild(el(doc, "h2", undefined, "Review candidate questions"));
  const form = el(doc, "form");
  const groups: string[] = [];
  for (const candidate of candidates) {
    const group = `seed-${candidate.id}`;
    groups.push(group);
    const fieldset = el(doc, "fieldset", "seed-row");
    fieldset.dataset.candidate = candidate.id;
    fieldset.appendChild(
      el(doc, "legend", undefined, `[${candidate.question_type}] ${candidate.question}`),
    );
    fieldset.appendChild(
      radioRow(doc, group, [
        { value: "accept", label: "Accept as seed" },
        { value: "reject", label: "Reject" },
      ]),
    );
    form.appendChild(fieldset);
  }
  const submit = el(doc, "button", "submit", "Submit decisions");
  submit.type = "submit";
  form.appendChild(submit);
  wireGate(form, submit, groups);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const raw = formValues(form, groups);
    if (raw === null) return;
    onSubmit(
      candidates.map((c) => ({ id: c.id, accept: raw[`seed-${c.id}`] === "accept" })),
    );
  });
  root.appendChild(form);
  return root;
}

export function doneView(doc: Document): HTMLElement {
  const root = el(doc, "div", "done");
  root.appendChild(el(doc, "h2", undefined, "All done"));
  root.appendChild(el(doc, "p", undefined, "No tasks are waiting for you right now."));
  return root;
}

export function errorBanner(doc: Document, message: string, onRetry: () => void): HTMLElement {
  const banner = el(doc, "div", "error-banner");
  banner.appendChild(el(doc, "span", undefined, message));
  const retry = el(doc, "button", "retry", "Retry");
  retry.type = "button";
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  return banner;
}
