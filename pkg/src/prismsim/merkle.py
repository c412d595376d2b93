"""Merkle commitments used by block headers and sortition proofs.

Leaves are arbitrary byte strings; each is hashed before pairing.  Levels
with an odd node count duplicate their final node (Bitcoin convention), so
a proof for any of ``n`` leaves carries exactly ``ceil(log2(n))`` siblings.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .crypto import sha256


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[bytes, ...]


def _leaf_hashes(leaves: Sequence[bytes]) -> list[bytes]:
    if not leaves:
        raise ValueError("merkle tree requires at least one leaf")
    return [sha256(leaf) for leaf in leaves]


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    level = _leaf_hashes(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    level = _leaf_hashes(leaves)
    siblings: list[bytes] = []
    pos = index
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        sibling = pos + 1 if pos % 2 == 0 else pos - 1
        siblings.append(level[sibling])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return MerkleProof(leaf_index=index, siblings=tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    node = sha256(leaf)
    pos = proof.leaf_index
    if pos < 0:
        return False
    for sibling in proof.siblings:
        if pos % 2 == 0:
            node = sha256(node + sibling)
        else:
            node = sha256(sibling + node)
        pos //= 2
    # A valid proof must consume the index: leftover high bits mean the
    # claimed index lies outside the tree the proof describes.
    if pos != 0:
        return False
    return node == root
