// Bootstrap: a minimal sign-in bar, then the annotation loop.

import { ApiClient } from "./api.js";
import { AnnotationApp } from "./app.js";

function start(annotator: string, token: string): void {
  const root = document.getElementById("app");
  const progress = document.getElementById("progress");
  if (!root) throw new Error("missing #app mount point");
  sessionStorage.setItem("annotator", annotator);
  sessionStorage.setItem("token", token);
  const api = new ApiClient("", annotator, token);
  const app = new AnnotationApp(api, root, progress ?? undefined);
  void app.start();
}

function initLogin(): void {
  const form = document.getElementById("login") as HTMLFormElement | null;
  if (!form) return;
  const stored = sessionStorage.getItem("annotator");
  if (stored) {
    form.hidden = true;
    start(stored, sessionStorage.getItem("token") ?? "");
    return;
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const annotator = (form.elements.namedItem("annotator") as HTMLInputElement).value.trim();
    const token = (form.elements.namedItem("token") as HTMLInputElement).value.trim();
    if (!annotator) return;
    form.hidden = true;
    start(annotator, token);
  });
}

initLogin();
