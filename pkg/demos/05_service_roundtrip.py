"""Drive the HTTP session service the way the browser client does.

Starts a service instance on a local port, creates a session from an
uploaded PNG, submits scribbles, triggers training, follows the progress
event stream, and downloads the committed mask. This is the full
human-in-the-loop protocol, minus the human.

Run:  python demos/05_service_roundtrip.py
"""

import base64
import io
import json
import tempfile
import threading
import time
from pathlib import Path

import httpx
import numpy as np
import uvicorn
from PIL import Image

from scribbleseg import IGNORE_INDEX, two_texture_benchmark
from scribbleseg.service import create_app, rle_encode

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

store = tempfile.mkdtemp(prefix="scribbleseg-demo-")
port = 8677
server = uvicorn.Server(
    uvicorn.Config(create_app(store), host="127.0.0.1", port=port, log_level="error")
)
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
base = f"http://127.0.0.1:{port}"
while True:
    try:
        httpx.get(f"{base}/health", timeout=0.5)
        break
    except httpx.TransportError:
        time.sleep(0.05)

bench = two_texture_benchmark(size=512, seed=0)
buf = io.BytesIO()
img8 = (np.clip(bench.image.data, 0, 1) * 255).astype(np.uint8)
Image.fromarray(img8).save(buf, format="PNG")

with httpx.Client(timeout=120.0) as client:
    session = client.post(
        f"{base}/sessions",
        json={
            "image_b64": base64.b64encode(buf.getvalue()).decode(),
            "spacing_um": 4.0,
            "classes": [
                {"id": 0, "name": "background", "color": "#1b9e77"},
                {"id": 1, "name": "lesion", "color": "#d95f02"},
            ],
            "config": {"fusion": {"proj_dim": 64}},
            "seed": 0,
        },
    ).json()
    sid = session["id"]
    print(f"session {sid} created at revision {session['revision']}")

    client.put(f"{base}/sessions/{sid}/scribbles", json=rle_encode(bench.scribbles.data))
    print("scribbles uploaded")

    client.post(f"{base}/sessions/{sid}/train", json={})
    with client.stream("GET", f"{base}/sessions/{sid}/events") as stream:
        for line in stream.iter_lines():
            if not line.startswith("data: "):
                continue
            event = json.loads(line[6:])
            if event["type"] == "epoch":
                print(f"  epoch {event['epoch']:2d}  loss {event['loss']:.4f}")
            elif event["type"] in ("completed", "error"):
                print(f"  {event['type']}: {event.get('revision', event.get('cause'))}")
                break

    mask = client.get(f"{base}/sessions/{sid}/mask")
    (out_dir / "service_mask.png").write_bytes(mask.content)
    print(f"mask at revision {mask.headers['X-Revision']} -> {out_dir}/service_mask.png")

server.should_exit = True
thread.join(timeout=5)
print("service stopped")
