// Thin client for the engine's annotation API. The UI never invents
// pairs or state; everything shown comes from these responses.

export interface Panel {
  id: number;
  image_ref: string | null;
  feature: number[];
  g: number[] | null;
}

export interface PairPayload {
  pair_id: string;
  a: Panel;
  b: Panel;
  stage: "intra" | "inter";
  budget_used: number;
  budget_total: number;
}

export interface PhasePayload {
  phase: "training" | "done";
  budget_used?: number;
}

export type NextPairResponse = PairPayload | PhasePayload;

export interface StatePayload {
  phase: string;
  epoch: number;
  finished: boolean;
  budget_used: number;
  budget_total: number;
  num_clusters: number;
  num_noise: number;
  reports: Record<string, unknown>[];
}

export class StaleError extends Error {}
export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Api {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (res.status === 409) throw new StaleError(path);
    if (!res.ok) throw new ApiError(res.status, `${path} -> ${res.status}`);
    return (await res.json()) as T;
  }

  openSession(): Promise<{ session_id: string }> {
    return this.request("/session", { method: "POST" });
  }

  nextPair(sessionId: string): Promise<NextPairResponse> {
    return this.request(`/session/${sessionId}/next-pair`);
  }

  submitVerdict(sessionId: string, pairId: string, v: 0 | 1): Promise<unknown> {
    return this.request(`/session/${sessionId}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pair_id: pairId, v }),
    });
  }

  state(sessionId: string): Promise<StatePayload> {
    return this.request(`/session/${sessionId}/state`);
  }
}

export function isPair(r: NextPairResponse): r is PairPayload {
  return (r as PairPayload).pair_id !== undefined;
}
