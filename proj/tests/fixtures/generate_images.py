#!/usr/bin/env python3
"""Writes the synthetic PPM fixtures. Output is deterministic."""

import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))


class Lcg:
    def __init__(self, seed):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next(self):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
        return (self.state >> 11) / float(1 << 53)


def clamp8(v):
    return max(0, min(255, int(round(v))))


def scene(width, height, seed):
    rng = Lcg(seed)
    blobs = [(rng.next() * width, rng.next() * height, 4 + rng.next() * width / 3,
              [rng.next() * 255 for _ in range(3)]) for _ in range(6)]
    fx, fy = 0.05 + rng.next() * 0.3, 0.05 + rng.next() * 0.3
    base = [rng.next() * 0.6 + 0.2 for _ in range(3)]
    pixels = bytearray()
    for y in range(height):
        for x in range(width):
            for c in range(3):
                v = 255 * base[c] * (0.6 + 0.4 * x / width) * (0.7 + 0.3 * y / height)
                for bx, by, r, col in blobs:
                    d = math.hypot(x - bx, y - by)
                    if d < r:
                        v = 0.35 * v + 0.65 * col[c]
                v += 18 * math.sin(fx * x + 2.1 * c) * math.cos(fy * y)
                v += (rng.next() - 0.5) * 10
                pixels.append(clamp8(v))
    return pixels


def distort(pixels, width, height, seed):
    rng = Lcg(seed)
    out = bytearray(len(pixels))
    for y in range(height):
        for x in range(width):
            for c in range(3):
                acc, n = 0, 0
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < height and 0 <= xx < width:
                            acc += pixels[(yy * width + xx) * 3 + c]
                            n += 1
                v = 0.5 * pixels[(y * width + x) * 3 + c] + 0.5 * acc / n
                v = 4 * round(v / 4) + (rng.next() - 0.5) * 12
                out[(y * width + x) * 3 + c] = clamp8(v)
    return out


def write(path, width, height, pixels):
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (width, height))
        f.write(pixels)


def main():
    ref = scene(256, 256, 1)
    write(os.path.join(HERE, "msssim_ref.ppm"), 256, 256, ref)
    write(os.path.join(HERE, "msssim_dist.ppm"), 256, 256, distort(ref, 256, 256, 2))
    sizes = [(64, 64), (64, 64), (96, 64), (64, 128), (80, 72), (128, 128)]
    for i, (w, h) in enumerate(sizes):
        write(os.path.join(HERE, "corpus", "img%02d.ppm" % i), w, h, scene(w, h, 100 + i))
    write(os.path.join(HERE, "odd_300x200.ppm"), 300, 200, scene(300, 200, 7))


if __name__ == "__main__":
    main()
