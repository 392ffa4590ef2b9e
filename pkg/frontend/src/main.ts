import { SessionApi } from "./api.js";
import { trainAndRefresh } from "./controller.js";
import {
  composeOverlay,
  paletteFor,
  rgbaToClassIds,
  scribbleLayer,
  sparklinePoints,
} from "./overlay.js";
import { stampStroke } from "./raster.js";
import { AnnotationState } from "./state.js";
import { ClassDef, IGNORE, Point, Stroke } from "./types.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const DEFAULT_CLASSES: ClassDef[] = [
  { id: 0, name: "background", color: "#1b9e77" },
  { id: 1, name: "target", color: "#d95f02" },
  { id: 2, name: "other", color: "#7570b3" },
];

interface App {
  api: SessionApi;
  sessionId: string;
  state: AnnotationState;
  classes: ClassDef[];
  image: ImageData;
  maskIds: Uint8Array | null;
  losses: number[];
}

let app: App | null = null;
let draftPoints: Point[] = [];
let drawing = false;
let erasing = false;
let brushRadius = 4;

function toast(message: string, isError = false): void {
  const box = $("toast");
  box.textContent = message;
  box.className = isError ? "toast error" : "toast";
  box.style.opacity = "1";
  setTimeout(() => (box.style.opacity = "0"), 4000);
}

async function fileToDataB64(file: File): Promise<string> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const byte of buf) binary += String.fromCharCode(byte);
  return btoa(binary);
}

async function createSession(): Promise<void> {
  const fileInput = $<HTMLInputElement>("image-file");
  const file = fileInput.files?.[0];
  if (!file) {
    toast("choose an image first", true);
    return;
  }
  const base = $<HTMLInputElement>("service-url").value.replace(/\/$/, "");
  const spacing = Number($<HTMLInputElement>("spacing").value) || 1.0;
  const numClasses = Math.min(
    Math.max(Number($<HTMLInputElement>("num-classes").value) || 2, 2),
    DEFAULT_CLASSES.length
  );
  const classes = DEFAULT_CLASSES.slice(0, numClasses);
  const api = new SessionApi(base);
  try {
    const info = await api.createSession(await fileToDataB64(file), spacing, classes);
    const image = await loadImageData(file);
    app = {
      api,
      sessionId: info.id,
      state: new AnnotationState(image.width, image.height),
      classes,
      image,
      maskIds: null,
      losses: [],
    };
    $("setup").style.display = "none";
    $("workbench").style.display = "block";
    $("session-label").textContent = `session ${info.id} · revision ${info.revision}`;
    setupCanvas(image);
    buildPalette(classes);
    loadPca();
    render();
  } catch (err) {
    toast(`${err}`, true);
  }
}

function loadImageData(file: File): Promise<ImageData> {
  return new Promise((resolve, reject) => {
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () => {
      const canvas = document.createElement("canvas");
      canvas.width = img.naturalWidth;
      canvas.height = img.naturalHeight;
      const ctx = canvas.getContext("2d")!;
      ctx.drawImage(img, 0, 0);
      URL.revokeObjectURL(url);
      resolve(ctx.getImageData(0, 0, canvas.width, canvas.height));
    };
    img.onerror = reject;
    img.src = url;
  });
}

function setupCanvas(image: ImageData): void {
  const canvas = $<HTMLCanvasElement>("view");
  canvas.width = image.width;
  canvas.height = image.height;

  const toImageCoords = (event: PointerEvent): Point => {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((event.clientX - rect.left) / rect.width) * canvas.width,
      y: ((event.clientY - rect.top) / rect.height) * canvas.height,
    };
  };

  canvas.onpointerdown = (event) => {
    if (!app || app.state.training) return;
    drawing = true;
    canvas.setPointerCapture(event.pointerId);
    draftPoints = [toImageCoords(event)];
    render();
  };
  canvas.onpointermove = (event) => {
    if (!drawing) return;
    draftPoints.push(toImageCoords(event));
    render();
  };
  canvas.onpointerup = () => {
    if (!drawing || !app) return;
    drawing = false;
    app.state.addStroke(draftStroke());
    draftPoints = [];
    render();
  };
}

function draftStroke(): Stroke {
  return {
    classId: erasing ? IGNORE : app!.state.activeClass,
    radius: brushRadius,
    points: draftPoints,
  };
}

function buildPalette(classes: ClassDef[]): void {
  const bar = $("palette");
  bar.innerHTML = "";
  for (const cls of classes) {
    const button = document.createElement("button");
    button.textContent = cls.name;
    button.style.borderColor = cls.color;
    button.onclick = () => {
      app!.state.activeClass = cls.id;
      erasing = false;
      refreshPaletteHighlight();
    };
    button.dataset.classId = String(cls.id);
    bar.appendChild(button);
  }
  const erase = document.createElement("button");
  erase.textContent = "erase";
  erase.onclick = () => {
    erasing = true;
    refreshPaletteHighlight();
  };
  erase.dataset.classId = "erase";
  bar.appendChild(erase);
  refreshPaletteHighlight();
}

function refreshPaletteHighlight(): void {
  for (const button of $("palette").querySelectorAll("button")) {
    const active = erasing
      ? button.dataset.classId === "erase"
      : button.dataset.classId === String(app!.state.activeClass);
    button.classList.toggle("active", active);
  }
}

function render(): void {
  if (!app) return;
  const canvas = $<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d")!;
  const palette = paletteFor(app.classes);

  const base = app.maskIds
    ? composeOverlay(app.image.data, app.maskIds, palette, app.state.overlayOpacity)
    : new Uint8ClampedArray(app.image.data);
  ctx.putImageData(new ImageData(base, app.image.width, app.image.height), 0, 0);

  // scribbles (committed + in-flight draft) on top, full color
  const raster = new Uint8Array(app.state.raster);
  if (drawing && draftPoints.length > 0) {
    stampStroke(raster, app.state.width, app.state.height, draftStroke());
  }
  const layer = scribbleLayer(raster, palette);
  const scratch = document.createElement("canvas");
  scratch.width = app.image.width;
  scratch.height = app.image.height;
  scratch.getContext("2d")!.putImageData(new ImageData(layer, scratch.width, scratch.height), 0, 0);
  ctx.drawImage(scratch, 0, 0);

  $("session-label").textContent =
    `session ${app.sessionId} · revision ${app.state.revision}` +
    (app.state.training ? " · training…" : "");
  $<HTMLButtonElement>("train").disabled = app.state.training;
  $("sparkline-path").setAttribute("points", sparklinePoints(app.losses, 160, 36));
}

async function onTrain(): Promise<void> {
  if (!app) return;
  app.losses = [];
  render();
  const outcome = await trainAndRefresh(app.state, app.api, app.sessionId, {
    onEvent: (event) => {
      if (event.type === "epoch") {
        app!.losses.push(event.loss);
        render();
      }
    },
    onError: (message) => toast(message, true),
  });
  if (outcome.ok && outcome.mask && !outcome.mask.untrained) {
    app.maskIds = await decodeMaskIds(outcome.mask.bytes);
    toast(`revision ${outcome.revision} rendered`);
  }
  render();
}

async function decodeMaskIds(bytes: ArrayBuffer): Promise<Uint8Array> {
  const bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  return rgbaToClassIds(rgba, paletteFor(app!.classes));
}

function loadPca(): void {
  const panel = $("pca-panel");
  panel.innerHTML = "";
  for (const layer of [3, 6, 9, 12]) {
    const button = document.createElement("button");
    button.textContent = `layer ${layer}`;
    button.onclick = () => {
      $<HTMLImageElement>("pca-image").src =
        app!.api.pcaUrl(app!.sessionId, layer) + `#${Date.now()}`;
    };
    panel.appendChild(button);
  }
}

function wireControls(): void {
  $("create").onclick = () => void createSession();
  $("train").onclick = () => void onTrain();
  $("undo").onclick = () => {
    if (app?.state.undo()) render();
  };
  $<HTMLInputElement>("opacity").oninput = (event) => {
    if (!app) return;
    app.state.overlayOpacity = Number((event.target as HTMLInputElement).value);
    render();
  };
  $<HTMLInputElement>("brush").oninput = (event) => {
    brushRadius = Number((event.target as HTMLInputElement).value);
  };
}

document.addEventListener("DOMContentLoaded", wireControls);
