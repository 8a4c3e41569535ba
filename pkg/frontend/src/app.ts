// Controller: one active task per session, optimistic submit with the
// server as arbiter (rejections refetch the queue).

import { ApiClient, ApiError, type QueueCounts, type TaskView } from "./api.js";
import {
  doneView,
  errorBanner,
  prefView,
  qcView,
  seedReviewView,
} from "./views.js";

export class AnnotationApp {
  private readonly doc: Document;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    private readonly progress?: HTMLElement,
  ) {
    this.doc = root.ownerDocument;
  }

  async start(): Promise<void> {
    await this.advance();
  }

  private setView(view: HTMLElement): void {
    this.root.replaceChildren(view);
  }

  private showProgress(queue: QueueCounts): void {
    if (this.progress) {
      this.progress.textContent =
        `${queue.closed} of ${queue.total} tasks closed, ${queue.open} open`;
    }
  }

  async advance(): Promise<void> {
    let next;
    try {
      next = await this.api.nextTask();
    } catch (error) {
      this.showError(`Could not reach the annotation service: ${error}`);
      return;
    }
    this.showProgress(next.queue);
    if (next.task !== null) {
      this.renderTask(next.task);
      return;
    }
    const pending = await this.api.pendingSeedCandidates().catch(() => []);
    if (pending.length) {
      this.setView(
        seedReviewView(this.doc, pending, (decisions) => {
          void this.submitSeedDecisions(decisions);
        }),
      );
      return;
    }
    this.setView(doneView(this.doc));
  }

  private renderTask(task: TaskView): void {
    if (task.kind === "qc") {
      this.setView(
        qcView(this.doc, task, (values) => {
          void this.submit(task.task_id, values);
        }),
      );
    } else {
      this.setView(
        prefView(this.doc, task, (values) => {
          void this.submit(task.task_id, values);
        }),
      );
    }
  }

  private async submit(taskId: string, values: Record<string, number | string>): Promise<void> {
    try {
      await this.api.submitLabel(taskId, values);
    } catch (error) {
      if (error instanceof ApiError) {
        // stale lease or validation problem: surface it and refetch
        this.showError(`Submission rejected: ${error.message}`);
        return;
      }
      this.showError(`Could not submit: ${error}`);
      return;
    }
    await this.advance();
  }

  private async submitSeedDecisions(decisions: { id: string; accept: boolean }[]): Promise<void> {
    try {
      for (const decision of decisions) {
        await this.api.decideSeed(decision.id, decision.accept);
      }
    } catch (error) {
      this.showError(`Could not record decisions: ${error}`);
      return;
    }
    await this.advance();
  }

  private showError(message: string): void {
    const banner = errorBanner(this.doc, message, () => {
      void this.advance();
    });
    this.root.prepend(banner);
  }
}
