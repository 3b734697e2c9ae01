import type {
  CandidateDescriptor,
  DepthsResponse,
  ImagesResponse,
  OrderViolationDetail,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  detail: unknown;
  flippedPair: [string, string] | null;

  constructor(status: number, detail: unknown) {
    const violation = asOrderViolation(detail);
    super(violation ? violation.message : typeof detail === "string" ? detail : `request failed (${status})`);
    this.status = status;
    this.detail = detail;
    this.flippedPair = violation ? violation.flipped_pair : null;
  }
}

function asOrderViolation(detail: unknown): OrderViolationDetail | null {
  if (detail && typeof detail === "object" && (detail as any).error === "order-violation") {
    return detail as OrderViolationDetail;
  }
  return null;
}

async function parseError(response: Response): Promise<never> {
  let detail: unknown = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    detail = body.detail ?? body;
  } catch {
    /* non-JSON body: keep the status text */
  }
  throw new ApiError(response.status, detail);
}

export class StudioApi {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.url(path), init);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  createSession(): Promise<SessionInfo> {
    return this.request<SessionInfo>("/sessions", { method: "POST" });
  }

  async uploadSegmentation(sessionId: string, png: Uint8Array): Promise<void> {
    const body = new Uint8Array(png).buffer as ArrayBuffer;
    await this.request(`/sessions/${sessionId}/segmentation`, {
      method: "PUT",
      headers: { "content-type": "image/png" },
      body,
    });
  }

  requestDepths(sessionId: string, n: number, seed?: number): Promise<DepthsResponse> {
    return this.request<DepthsResponse>(`/sessions/${sessionId}/depths`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(seed === undefined ? { n } : { n, seed }),
    });
  }

  shiftDepth(
    sessionId: string,
    candidateId: string,
    label: string,
    delta: number,
  ): Promise<CandidateDescriptor> {
    return this.request<CandidateDescriptor>(
      `/sessions/${sessionId}/depths/${candidateId}/shift`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ label, delta }),
      },
    );
  }

  requestImages(
    sessionId: string,
    candidateId: string,
    n: number,
    seed?: number,
  ): Promise<ImagesResponse> {
    return this.request<ImagesResponse>(`/sessions/${sessionId}/images`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(
        seed === undefined ? { candidate_id: candidateId, n } : { candidate_id: candidateId, n, seed },
      ),
    });
  }

  async fetchAsset(sessionId: string, assetId: string): Promise<Uint8Array> {
    const response = await fetch(this.url(`/sessions/${sessionId}/assets/${assetId}`));
    if (!response.ok) await parseError(response);
    return new Uint8Array(await response.arrayBuffer());
  }

  assetUrl(sessionId: string, assetId: string): string {
    return this.url(`/sessions/${sessionId}/assets/${assetId}`);
  }
}
