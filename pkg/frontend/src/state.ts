import { classesPresent, compositeStrokes, stampStroke } from "./raster.js";
import { IGNORE, Stroke } from "./types.js";

/**
 * Client-side annotation state: the stroke list is the source of truth and
 * the raster is its composition, so undo is a pop-and-replay. The server
 * only ever sees the composited raster.
 */
export class AnnotationState {
  readonly width: number;
  readonly height: number;
  strokes: Stroke[] = [];
  raster: Uint8Array;
  activeClass = 0;
  overlayOpacity = 0.5;
  revision = 0;
  training = false;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.raster = new Uint8Array(width * height).fill(IGNORE);
  }

  addStroke(stroke: Stroke): void {
    this.strokes.push(stroke);
    stampStroke(this.raster, this.width, this.height, stroke);
  }

  undo(): boolean {
    if (this.strokes.length === 0) return false;
    this.strokes.pop();
    this.raster = compositeStrokes(this.strokes, this.width, this.height);
    return true;
  }

  clear(): void {
    this.strokes = [];
    this.raster.fill(IGNORE);
  }

  classesScribbled(): number[] {
    return classesPresent(this.raster);
  }

  /** Mirrors the server's training precondition; blocks bad requests early. */
  preflightTrain(): { ok: boolean; reason?: string } {
    const present = this.classesScribbled();
    if (present.length < 2) {
      return {
        ok: false,
        reason: `scribble at least 2 classes before training (have ${present.length})`,
      };
    }
    return { ok: true };
  }

  /** Displayed revision never decreases; stale responses are dropped. */
  acceptRevision(revision: number): boolean {
    if (revision < this.revision) return false;
    this.revision = revision;
    return true;
  }
}
