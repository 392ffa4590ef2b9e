export const IGNORE = 255;

export interface ClassDef {
  id: number;
  name: string;
  color: string; // #rrggbb
}

export interface SessionInfo {
  id: string;
  revision: number;
  status: "idle" | "training" | "inferring";
  spacing_um: number;
  classes: ClassDef[];
  image_shape: [number, number]; // [height, width]
}

export interface RlePayload {
  width: number;
  height: number;
  runs: Array<[number, number, number]>; // [start, length, classId]
}

export type TrainEvent =
  | { type: "started"; revision: number }
  | { type: "epoch"; epoch: number; loss: number }
  | { type: "inferring" }
  | { type: "completed"; revision: number }
  | { type: "error"; cause: string };

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  classId: number; // IGNORE erases
  radius: number;
  points: Point[];
}

export interface MaskResponse {
  bytes: ArrayBuffer;
  revision: number;
  untrained: boolean;
}
