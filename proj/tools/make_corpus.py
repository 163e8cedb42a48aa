#!/usr/bin/env python3
"""Builds tests/data/corpus: centre crops of scikit-image's bundled photos,
converted to 8-bit 4:2:0 y4m with full-range BT.601 and 2x2 box chroma."""
import os
import sys

import numpy as np
import skimage.data
import skimage.io

NAMES = ["astronaut", "brick", "camera", "chelsea", "coffee", "coins", "grass", "gravel",
         "moon", "motorcycle_left", "rocket", "retina"]
W, H = 256, 176


def load(name):
    path = os.path.join(skimage.data.data_dir, name + ".png")
    if not os.path.exists(path):
        path = os.path.join(skimage.data.data_dir, name + ".jpg")
    img = skimage.io.imread(path)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    return img[..., :3].astype(np.float64)


def crop(img):
    h, w = img.shape[:2]
    y0, x0 = (h - H) // 2, (w - W) // 2
    return img[y0:y0 + H, x0:x0 + W]


def to_y4m(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b

    def q(p):
        return np.clip(np.floor(p + 0.5), 0, 255).astype(np.uint8)

    def down(p):
        p = q(p).astype(np.int32)
        s = p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]
        return ((s + 2) // 4).astype(np.uint8)

    head = f"YUV4MPEG2 W{W} H{H} F25:1 Ip A1:1 C420jpeg\nFRAME\n".encode()
    return head + q(y).tobytes() + down(cb).tobytes() + down(cr).tobytes()


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/corpus"
    os.makedirs(out, exist_ok=True)
    for name in NAMES:
        with open(os.path.join(out, name + ".y4m"), "wb") as f:
            f.write(to_y4m(crop(load(name))))


if __name__ == "__main__":
    main()
