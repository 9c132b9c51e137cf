"""Regenerates the ground-truth images in data/ from scikit-image's sample data.

All sources are CC0 / public domain (see skimage.data documentation).
Each 50x50 truth is a 200x200 crop reduced by 4x4 box averaging.
"""
from pathlib import Path

import numpy as np
import skimage.data as sd
from skimage.color import rgb2gray

HERE = Path(__file__).resolve().parent

CROPS = {
    "camera": (sd.camera, 80, 160),
    "astronaut": (sd.astronaut, 40, 140),
    "coffee": (sd.coffee, 100, 200),
    "rocket": (sd.rocket, 120, 260),
}


def gray8(img):
    if img.ndim == 3:
        img = rgb2gray(img) * 255.0
    return np.asarray(img, dtype=np.float64)


def box_reduce(img, f):
    h, w = img.shape[0] // f * f, img.shape[1] // f * f
    return img[:h, :w].reshape(h // f, f, w // f, f).mean(axis=(1, 3))


def write_pgm(path, img):
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def main():
    for name, (loader, r, c) in CROPS.items():
        crop = gray8(loader())[r : r + 200, c : c + 200]
        write_pgm(HERE / "truths" / f"{name}_50.pgm", box_reduce(crop, 4))
    write_pgm(HERE / "burst_base.pgm", box_reduce(gray8(sd.camera()), 2))


if __name__ == "__main__":
    main()
