#!/usr/bin/env python3
"""Reference implementation of the undersampling mask recipe.

Writes `width R center_fraction seed : i,j,...` lines; the Rust test suite
checks its own masks against this file.
"""
import math
import sys

M64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & M64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        return z ^ (z >> 31)

    def below(self, n):
        return (self.next() * n) >> 64


def round_half_away(x):
    return int(math.floor(x + 0.5))


def make_mask(width, accel, cf, seed):
    n_total = round_half_away(width / accel)
    n_center = round_half_away(cf * width)
    start = (width - n_center + 1) // 2
    center = range(start, start + n_center)
    selected = set(center)
    cand = [i for i in range(width) if i not in selected]
    rng = SplitMix64(seed)
    for i in range(n_total - n_center):
        j = i + rng.below(len(cand) - i)
        cand[i], cand[j] = cand[j], cand[i]
        selected.add(cand[i])
    return sorted(selected)


CASES = [
    (320, 4, 0.08, 0),
    (320, 4, 0.08, 1),
    (320, 4, 0.08, 12345),
    (320, 8, 0.04, 0),
    (320, 8, 0.04, 987654321),
    (368, 4, 0.08, 42),
    (368, 8, 0.04, 42),
    (372, 4, 0.08, 2019),
    (372, 8, 0.04, 2019),
    (640, 4, 0.08, 18446744073709551615),
    (37, 1, 0, 3),
    (64, 2, 0.1, 7),
]

if __name__ == "__main__":
    out = sys.stdout
    for w, r, cf, seed in CASES:
        idx = make_mask(w, r, cf, seed)
        out.write(f"{w} {r} {cf} {seed} : {','.join(map(str, idx))}\n")
