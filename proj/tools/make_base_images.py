#!/usr/bin/env python3
"""Regenerates data/base_images/ from the sample images bundled with scikit-image.

Only sources released as public domain or CC0 are used. Each source is scaled so
its short side is 256 px and cut into non-overlapping 128x128 RGB tiles.
"""
import pathlib
import sys

import numpy as np
from PIL import Image
from skimage import data

SOURCES = ["astronaut", "chelsea", "coffee", "rocket", "hubble_deep_field",
           "retina", "brick", "grass", "gravel", "camera"]
TILE = 128


def main(out_dir: pathlib.Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in SOURCES:
        img = np.asarray(getattr(data, name)())
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        img = Image.fromarray(img[..., :3].astype(np.uint8))
        scale = 256.0 / min(img.size)
        img = img.resize((round(img.size[0] * scale), round(img.size[1] * scale)), Image.LANCZOS)
        w, h = img.size
        for ty in range(h // TILE):
            for tx in range(w // TILE):
                tile = img.crop((tx * TILE, ty * TILE, (tx + 1) * TILE, (ty + 1) * TILE))
                tile.save(out_dir / f"{name}_{ty}{tx}.png", optimize=True)


if __name__ == "__main__":
    main(pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/base_images"))
