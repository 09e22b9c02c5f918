"""Extract a data-dependency graph from the data-movement instructions of a segment.

Operands become nodes (one per distinct normalized operand string within the
segment), and each filtered instruction adds one directed edge per source
operand, pointing source -> destination.  Intel syntax puts the destination
first, so ``mov eax, ebx`` yields ebx -> eax.  Repeated identical moves keep
parallel edges (multiset semantics); ``mov eax, eax`` is a self-loop.
Instructions outside the filter, or with fewer than two operands, contribute
nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .segmenter import Segment

__all__ = ["DepGraph", "DEFAULT_INSTRUCTION_FILTER", "build_graph"]

# Data movement only by default; widen to {"mov", "movzx", "movsx", "xchg", ...}
# via configuration to trade speed for resolution.
DEFAULT_INSTRUCTION_FILTER = frozenset({"mov"})


@dataclass
class DepGraph:
    """Directed multigraph of operand nodes and data-movement edges.

    ``labels[i]`` is the normalized operand string behind node id ``i``;
    ``edges`` is a list of (src_id, dst_id) pairs with multiplicity.
    """

    labels: list[str] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    segment_ref: tuple[str, int] = ("", 0)

    @property
    def node_count(self) -> int:
        return len(self.labels)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def is_empty(self) -> bool:
        return not self.labels and not self.edges


def build_graph(
    seg: Segment,
    instruction_filter: frozenset[str] | set[str] = DEFAULT_INSTRUCTION_FILTER,
) -> DepGraph:
    """Build the segment's dependency graph (possibly empty).

    Nodes only arise from edges, so a non-empty graph always has at least one
    edge.  Node ids are dense integers in first-appearance order; they carry
    no meaning beyond indexing ``labels``.
    """
    node_ids: dict[str, int] = {}
    graph = DepGraph(segment_ref=(seg.sample_id, seg.index))

    def node(operand: str) -> int:
        nid = node_ids.get(operand)
        if nid is None:
            nid = node_ids[operand] = len(graph.labels)
            graph.labels.append(operand)
        return nid

    for ins in seg.instructions:
        if ins.mnemonic not in instruction_filter or len(ins.operands) < 2:
            continue
        dst = node(ins.operands[0])
        for src_operand in ins.operands[1:]:
            graph.edges.append((node(src_operand), dst))
    return graph
