import { ApiError, SessionApi } from "./api.js";
import { rleEncode } from "./rle.js";
import { AnnotationState } from "./state.js";
import { MaskResponse, TrainEvent } from "./types.js";

export interface TrainCallbacks {
  onEvent?: (event: TrainEvent) => void;
  onError?: (message: string) => void;
}

export interface TrainOutcome {
  ok: boolean;
  revision?: number;
  mask?: MaskResponse;
  reason?: string;
}

/**
 * The full refresh cycle: preflight, upload the composited raster, start the
 * job, follow progress, fetch the mask at the committed revision, and hand
 * it back for rendering. The train control stays disabled (state.training)
 * for the whole cycle; stale revisions are discarded.
 */
export async function trainAndRefresh(
  state: AnnotationState,
  api: SessionApi,
  sessionId: string,
  callbacks: TrainCallbacks = {}
): Promise<TrainOutcome> {
  const preflight = state.preflightTrain();
  if (!preflight.ok) {
    callbacks.onError?.(preflight.reason ?? "not ready to train");
    return { ok: false, reason: preflight.reason };
  }
  if (state.training) {
    return { ok: false, reason: "a training request is already in flight" };
  }
  state.training = true;
  try {
    await api.putScribbles(sessionId, rleEncode(state.raster, state.width, state.height));
    await api.train(sessionId);
    const terminal = await api.watchTraining(sessionId, (event) => callbacks.onEvent?.(event));
    if (terminal.type === "error") {
      callbacks.onError?.(terminal.cause);
      return { ok: false, reason: terminal.cause };
    }
    const revision = terminal.type === "completed" ? terminal.revision : state.revision;
    const mask = await api.getMask(sessionId, revision);
    if (!state.acceptRevision(mask.revision)) {
      // a newer revision was already displayed; drop the stale response
      return { ok: false, reason: "stale revision discarded" };
    }
    return { ok: true, revision: mask.revision, mask };
  } catch (err) {
    const message = err instanceof ApiError ? err.message : `${err}`;
    callbacks.onError?.(message);
    return { ok: false, reason: message };
  } finally {
    state.training = false;
  }
}

/** Round-trip check used by tests and the debug panel: upload then download. */
export async function scribbleRoundTrip(
  state: AnnotationState,
  api: SessionApi,
  sessionId: string
): Promise<boolean> {
  await api.putScribbles(sessionId, rleEncode(state.raster, state.width, state.height));
  const back = await api.getScribbles(sessionId);
  const { rleDecode } = await import("./rle.js");
  const raster = rleDecode(back);
  if (raster.length !== state.raster.length) return false;
  for (let i = 0; i < raster.length; i++) {
    if (raster[i] !== state.raster[i]) return false;
  }
  return true;
}
