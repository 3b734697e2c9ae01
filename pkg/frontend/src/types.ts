export interface SessionInfo {
  session_id: string;
  label_set: string[];
  resolution: number;
}

export interface CandidateDescriptor {
  candidate_id: string;
  seed: number;
  edit_history: { label: string; delta: number }[];
  segment_means: Record<string, number>;
  asset_url: string;
}

export interface ImageDescriptor {
  image_id: string;
  seed: number;
  candidate_id: string;
  asset_url: string;
}

export interface DepthsResponse {
  candidates: CandidateDescriptor[];
  seed: number;
}

export interface ImagesResponse {
  images: ImageDescriptor[];
  seed: number;
}

export interface OrderViolationDetail {
  error: "order-violation";
  message: string;
  flipped_pair: [string, string];
}
