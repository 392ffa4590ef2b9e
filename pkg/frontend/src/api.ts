import { ClassDef, MaskResponse, RlePayload, SessionInfo, TrainEvent } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/**
 * Typed client for the session service. `fetch` and the EventSource factory
 * are injectable so the logic is testable without a browser or a server.
 */
export class SessionApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
    private readonly eventSourceFactory: EventSourceFactory = (url) =>
      new EventSource(url) as unknown as EventSourceLike
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let cause = `${resp.status}`;
      try {
        const body = await resp.json();
        cause = body.error ?? body.detail ?? cause;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, cause);
    }
    return resp;
  }

  async createSession(
    imageB64: string,
    spacingUm: number,
    classes: ClassDef[],
    config?: Record<string, unknown>,
    seed = 0
  ): Promise<SessionInfo> {
    const resp = await this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image_b64: imageB64,
        spacing_um: spacingUm,
        classes,
        config,
        seed,
      }),
    });
    return resp.json();
  }

  async getSession(id: string): Promise<SessionInfo> {
    return (await this.request(`/sessions/${id}`)).json();
  }

  async putScribbles(id: string, payload: RlePayload): Promise<SessionInfo> {
    const resp = await this.request(`/sessions/${id}/scribbles`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return resp.json();
  }

  async getScribbles(id: string): Promise<RlePayload> {
    return (await this.request(`/sessions/${id}/scribbles`)).json();
  }

  async train(id: string, epochs?: number): Promise<SessionInfo> {
    const resp = await this.request(`/sessions/${id}/train`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(epochs === undefined ? {} : { epochs }),
    });
    return resp.json();
  }

  async getMask(id: string, revision?: number): Promise<MaskResponse> {
    const query = revision === undefined ? "" : `?revision=${revision}`;
    const resp = await this.request(`/sessions/${id}/mask${query}`);
    return {
      bytes: await resp.arrayBuffer(),
      revision: Number(resp.headers.get("X-Revision") ?? "0"),
      untrained: resp.headers.get("X-Untrained") === "1",
    };
  }

  pcaUrl(id: string, layer: number): string {
    return `${this.baseUrl}/sessions/${id}/pca/${layer}`;
  }

  /**
   * Subscribe to training progress; resolves with the terminal event and
   * always closes the stream. Intermediate events go to `onEvent`.
   */
  watchTraining(id: string, onEvent: (event: TrainEvent) => void): Promise<TrainEvent> {
    return new Promise((resolve, reject) => {
      const source = this.eventSourceFactory(`${this.baseUrl}/sessions/${id}/events`);
      source.onmessage = (message) => {
        const event: TrainEvent = JSON.parse(message.data);
        onEvent(event);
        if (event.type === "completed" || event.type === "error") {
          source.close();
          resolve(event);
        }
      };
      source.onerror = (err) => {
        source.close();
        reject(err instanceof Error ? err : new Error("event stream failed"));
      };
    });
  }
}
