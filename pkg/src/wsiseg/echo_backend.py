"""Reference external backend: answers each tile with its reference channel.

Run as ``python -m wsiseg.echo_backend``. Requests without a
``path_reference`` are answered with an all-zero score tile.
"""

import json
import os
import sys
import tempfile

import numpy as np
from PIL import Image


def answer(request: dict) -> dict:
    ref = request.get("path_reference")
    if ref:
        with Image.open(ref) as img:
            scores = np.asarray(img).astype(np.uint16)
    else:
        with Image.open(request["path_rgb"]) as img:
            w, h = img.size
        scores = np.zeros((h, w), dtype=np.uint16)
    out = request.get("path_score")
    if not out:
        fd, out = tempfile.mkstemp(suffix=".png")
        os.close(fd)
    Image.fromarray(scores).save(out, format="PNG")
    return {"tile_id": request["tile_id"], "path_score": str(out)}


def main() -> int:
    for line in sys.stdin:
        if not line.strip():
            continue
        response = answer(json.loads(line))
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
