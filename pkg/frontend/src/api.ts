// Typed client over the annotation service HTTP API.

export interface QueueCounts {
  total: number;
  closed: number;
  open: number;
  pending_seeds: number;
}

export interface QCTaskView {
  kind: "qc";
  task_id: string;
  tables: string[];
  question: string;
  insight: string;
  criteria: string[];
}

export interface PrefTaskView {
  kind: "pref";
  task_id: string;
  tables: string[];
  question: string;
  insight_left: string;
  insight_right: string;
  dimensions: string[];
}

export type TaskView = QCTaskView | PrefTaskView;

export interface NextTaskResponse {
  task: TaskView | null;
  queue: QueueCounts;
}

export interface SeedCandidate {
  id: string;
  question: string;
  question_type: string;
}

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly endpoint: string,
    private readonly annotator: string,
    private readonly token: string = "",
  ) {}

  get annotatorId(): string {
    return this.annotator;
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Annotator-Token"] = this.token;
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.endpoint}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const payload = await response.json();
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  nextTask(): Promise<NextTaskResponse> {
    return this.request<NextTaskResponse>(
      "GET",
      `/tasks/next?annotator=${encodeURIComponent(this.annotator)}`,
    );
  }

  submitLabel(taskId: string, values: Record<string, number | string>): Promise<{ accepted: boolean; closed: boolean }> {
    return this.request("POST", "/labels", {
      task_id: taskId,
      annotator_id: this.annotator,
      values,
    });
  }

  pendingSeedCandidates(): Promise<SeedCandidate[]> {
    return this.request<{ candidates: SeedCandidate[] }>("GET", "/seeds/candidates").then(
      (r) => r.candidates,
    );
  }

  decideSeed(candidateId: string, accept: boolean): Promise<unknown> {
    return this.request("POST", "/seeds/decisions", {
      candidate_id: candidateId,
      accept,
    });
  }
}
