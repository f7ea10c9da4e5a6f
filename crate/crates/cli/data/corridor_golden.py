#!/usr/bin/env python3
"""Golden plan cost for corridor.pgm, from a standalone Dijkstra.

Shares no code with the planner: reads the map itself, inflates by brute
force over all source cells and runs a heap-based Dijkstra with the same
move rules (8-connected, no diagonal squeeze past a lethal cell, step cost
delta * (1 + 4 * (c_from + c_to) / 2)).

    python3 corridor_golden.py > corridor.golden
"""
import heapq
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
START, GOAL = (0.5, 1.0), (4.5, 1.0)
RADIUS, INFLATION = 0.15, 0.45


def read_pgm(path):
    data = open(path, "rb").read()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    assert fields[0] == b"P5" and int(fields[3]) == 255
    w, h = int(fields[1]), int(fields[2])
    return w, h, data[pos + 1:pos + 1 + w * h]


def read_meta(path):
    meta = {}
    for line in open(path):
        line = line.split("#")[0].strip()
        if line:
            k, v = line.split("=")
            meta[k.strip()] = float(v)
    return meta


def main():
    w, h, pix = read_pgm(os.path.join(HERE, "corridor.pgm"))
    meta = read_meta(os.path.join(HERE, "corridor.meta"))
    res = meta["resolution"]
    assert meta["origin_theta"] == 0.0

    # grid row 0 is the bottom image row; anything not pure free is a source
    src = [(c, h - 1 - r) for r in range(h) for c in range(w) if pix[r * w + c] != 254]
    rc = RADIUS / res
    cost = {}
    for r in range(h):
        for c in range(w):
            d2 = min((c - sc) ** 2 + (r - sr) ** 2 for sc, sr in src)
            if d2 <= rc * rc + 1e-9:
                cost[c, r] = math.inf
            else:
                d = math.sqrt(d2) * res
                cost[c, r] = min(1.0, max(0.0, 1.0 - (d - RADIUS) / (INFLATION - RADIUS))) if d < INFLATION else 0.0

    def cell(x, y):
        return int(math.floor((x - meta["origin_x"]) / res)), int(math.floor((y - meta["origin_y"]) / res))

    def lethal(c, r):
        return not (0 <= c < w and 0 <= r < h) or math.isinf(cost[c, r])

    s, g = cell(*START), cell(*GOAL)
    assert not lethal(*s) and not lethal(*g)
    dist = {s: 0.0}
    heap = [(0.0, s)]
    while heap:
        d, (c, r) = heapq.heappop(heap)
        if d > dist[c, r]:
            continue
        if (c, r) == g:
            break
        for dc in (-1, 0, 1):
            for dr in (-1, 0, 1):
                n = (c + dc, r + dr)
                if (dc, dr) == (0, 0) or lethal(*n):
                    continue
                diag = dc != 0 and dr != 0
                if diag and (lethal(c + dc, r) or lethal(c, r + dr)):
                    continue
                step = (math.sqrt(2.0) if diag else 1.0) * (1.0 + 4.0 * (cost[c, r] + cost[n]) / 2.0)
                if d + step < dist.get(n, math.inf):
                    dist[n] = d + step
                    heapq.heappush(heap, (d + step, n))
    print("# plan --map corridor.pgm --start %g %g --goal %g %g (radius %g, inflation %g)" % (START + GOAL + (RADIUS, INFLATION)))
    print("start = %r %r" % START)
    print("goal = %r %r" % GOAL)
    print("cost = %.12f" % dist[g])


main()
