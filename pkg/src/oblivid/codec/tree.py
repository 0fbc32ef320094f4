"""Coefficient token tree in array form.

Node 0 is the dummy node and node 1 the start node.  Every node packs into one
``int64`` word so an oblivious node fetch is a scan over a short word array:

    bits 0-7   prob     probability (of 256) that the decoded bit is 0
    bits 8-15  next0    successor after a 0 bit
    bits 16-23 next1    successor after a 1 bit
    bits 24-25 type     0 dummy, 1 mid, 2 end
    bit  26    acc      append the bit to the magnitude register
    bit  27    sign     bit is the sign; completes +-(base + register)
    bit  28    end0     a 0 bit completes a token
    bit  29    end1     a 1 bit completes a token
    bit  30    eob0     a 0 bit completes the end-of-block token
    bits 32-44 base     magnitude offset for sign nodes

Token grammar: ``EOB | ZERO | class c (c = 0..11), c raw bits, sign``.
Class ``c`` covers magnitudes ``[2**c, 2**(c+1))``, so values up to 4095 fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DUMMY, MID, END = 0, 1, 2
N_CLASSES = 12
MAX_MAGNITUDE = (1 << N_CLASSES) - 1
EOB = None

START_NODE = 1
ZERO_NODE = 2
CLASS_NODE0 = 3

# Skewed towards small magnitudes; all within [16, 224] so every decision
# shrinks a 16-bit chunk range by a bounded factor.
P_EOB = 96
P_ZERO = 150
P_CLASS = (160, 150, 140, 130, 128, 128, 128, 128, 128, 128, 128)


@dataclass(frozen=True)
class Node:
    prob: int
    next0: int
    next1: int
    type: int
    acc: int = 0
    sign: int = 0
    end0: int = 0
    end1: int = 0
    eob0: int = 0
    base: int = 0

    def pack(self) -> int:
        return (self.prob | self.next0 << 8 | self.next1 << 16 | self.type << 24
                | self.acc << 26 | self.sign << 27 | self.end0 << 28 | self.end1 << 29
                | self.eob0 << 30 | self.base << 32)

    @classmethod
    def unpack(cls, w: int) -> "Node":
        return cls(w & 0xFF, (w >> 8) & 0xFF, (w >> 16) & 0xFF, (w >> 24) & 3,
                   (w >> 26) & 1, (w >> 27) & 1, (w >> 28) & 1, (w >> 29) & 1,
                   (w >> 30) & 1, (w >> 32) & 0x1FFF)


@dataclass(frozen=True)
class PrefixTree:
    nodes: tuple[Node, ...]
    class_entry: tuple[int, ...]   # first node of each magnitude class

    def packed(self) -> np.ndarray:
        return np.array([n.pack() for n in self.nodes], np.int64)

    def __len__(self) -> int:
        return len(self.nodes)


def build_tree() -> PrefixTree:
    nodes: list[Node | None] = [Node(128, 0, 0, DUMMY)]
    nodes.append(None)                     # 1: start, filled below
    nodes.append(None)                     # 2: zero / nonzero
    nodes += [None] * (N_CLASSES - 1)      # 3..13: class chain
    entry = []
    for c in range(N_CLASSES):
        sign_idx = len(nodes) + c
        # extra-bit chain for class c, then its sign node
        first = len(nodes)
        for k in range(c):
            nodes.append(Node(128, first + k + 1, first + k + 1, MID, acc=1))
        sign_idx = len(nodes)
        nodes.append(Node(128, START_NODE, START_NODE, END, sign=1, end0=1, end1=1,
                          base=1 << c))
        entry.append(first if c else sign_idx)
    nodes[START_NODE] = Node(P_EOB, START_NODE, ZERO_NODE, END, end0=1, eob0=1)
    nodes[ZERO_NODE] = Node(P_ZERO, START_NODE, CLASS_NODE0, END, end0=1)
    for c in range(N_CLASSES - 1):
        nxt1 = CLASS_NODE0 + c + 1 if c < N_CLASSES - 2 else entry[N_CLASSES - 1]
        nodes[CLASS_NODE0 + c] = Node(P_CLASS[c], entry[c], nxt1, MID)
    if len(nodes) > 256:
        raise AssertionError("tree does not fit 8-bit node indices")
    return PrefixTree(tuple(nodes), tuple(entry))


TREE = build_tree()
PACKED = TREE.packed()


def token_path(value: int | None, tree: PrefixTree = TREE) -> list[tuple[int, int]]:
    """``(node, bit)`` decisions that encode ``value`` (``None`` is EOB)."""
    if value is None:
        return [(START_NODE, 0)]
    path = [(START_NODE, 1)]
    if value == 0:
        return path + [(ZERO_NODE, 0)]
    path.append((ZERO_NODE, 1))
    m = abs(int(value))
    if m > MAX_MAGNITUDE:
        raise ValueError(f"coefficient {value} exceeds +-{MAX_MAGNITUDE}")
    c = m.bit_length() - 1
    for k in range(c):
        path.append((CLASS_NODE0 + k, 1))
    if c < N_CLASSES - 1:
        path.append((CLASS_NODE0 + c, 0))
    node = tree.class_entry[c]
    rest = m - (1 << c)
    for k in range(c - 1, -1, -1):
        path.append((node, (rest >> k) & 1))
        node += 1
    path.append((node, int(value < 0)))
    return path
