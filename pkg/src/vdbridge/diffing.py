"""Change detection between consecutive object-graph snapshots.

The change set drives the green/orange highlighting: brand-new nodes and
links are additions, existing nodes whose attribute values or outgoing
link set changed are modifications. Content is only compared for nodes
expanded in both snapshots, so revealing more of the heap never counts as
a change by itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .graph import Link, ObjectGraph, ObjectNode, RootBinding, SourceLocation, StableId


class DiffError(Exception):
    """Base class for diff failures."""


class IdentityStrategyMismatch(DiffError):
    """The two graphs carry disjoint identity strategies."""


class DanglingChangeError(DiffError):
    """A change set references ids absent from the graph or payloads."""


@dataclass(frozen=True)
class ChangeSet:
    """Added/changed/removed nodes and links between two snapshots."""

    added_nodes: frozenset[StableId] = frozenset()
    changed_nodes: Mapping[StableId, frozenset[str]] = field(default_factory=dict)
    removed_nodes: frozenset[StableId] = frozenset()
    added_links: frozenset[Link] = frozenset()
    removed_links: frozenset[Link] = frozenset()

    def __post_init__(self) -> None:
        changed = set(self.changed_nodes)
        for first, second in (
            (self.added_nodes, changed),
            (self.added_nodes, self.removed_nodes),
            (changed, self.removed_nodes),
        ):
            overlap = set(first) & set(second)
            if overlap:
                raise ValueError(f"change categories overlap on {sorted(i.wire() for i in overlap)}")

    @classmethod
    def empty(cls) -> "ChangeSet":
        return cls()

    def is_empty(self) -> bool:
        return not (
            self.added_nodes
            or self.changed_nodes
            or self.removed_nodes
            or self.added_links
            or self.removed_links
        )

    def wire(self) -> dict[str, Any]:
        return {
            "addedNodes": sorted(i.wire() for i in self.added_nodes),
            "changedNodes": {
                node_id.wire(): sorted(fields)
                for node_id, fields in sorted(self.changed_nodes.items(), key=lambda kv: kv[0])
            },
            "removedNodes": sorted(i.wire() for i in self.removed_nodes),
            "addedLinks": _links_wire(self.added_links),
            "removedLinks": _links_wire(self.removed_links),
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "ChangeSet":
        return cls(
            added_nodes=frozenset(StableId.parse(i) for i in doc["addedNodes"]),
            changed_nodes={
                StableId.parse(i): frozenset(fields) for i, fields in doc["changedNodes"].items()
            },
            removed_nodes=frozenset(StableId.parse(i) for i in doc["removedNodes"]),
            added_links=_links_from_wire(doc["addedLinks"]),
            removed_links=_links_from_wire(doc["removedLinks"]),
        )


def _links_wire(links: Iterable[Link]) -> list[dict[str, str]]:
    ordered = sorted(links, key=lambda l: (l.source, l.field_name, l.target))
    return [
        {"source": l.source.wire(), "field": l.field_name, "target": l.target.wire()}
        for l in ordered
    ]


def _links_from_wire(entries: Iterable[Mapping[str, str]]) -> frozenset[Link]:
    return frozenset(
        Link(
            source=StableId.parse(e["source"]),
            field_name=e["field"],
            target=StableId.parse(e["target"]),
        )
        for e in entries
    )


def _strategies(graph: ObjectGraph) -> set[str]:
    return {node_id.strategy for node_id in graph.nodes}


def diff(prev: ObjectGraph, curr: ObjectGraph) -> ChangeSet:
    """Compute the change set from ``prev`` to ``curr``.

    Node content (attribute values and outgoing links, by field) is
    compared only when the node is expanded in both graphs; expansion
    state alone is never a change. Link additions/removals are computed
    setwise over (source, field, target) regardless.
    """
    prev_strategies, curr_strategies = _strategies(prev), _strategies(curr)
    if prev_strategies and curr_strategies and not (prev_strategies & curr_strategies):
        raise IdentityStrategyMismatch(
            f"cannot diff {sorted(prev_strategies)} identities against {sorted(curr_strategies)}"
        )

    prev_ids = set(prev.nodes)
    curr_ids = set(curr.nodes)
    added = frozenset(curr_ids - prev_ids)
    removed = frozenset(prev_ids - curr_ids)

    prev_out = _outgoing_index(prev)
    curr_out = _outgoing_index(curr)
    changed: dict[StableId, frozenset[str]] = {}
    for node_id in prev_ids & curr_ids:
        before, after = prev.nodes[node_id], curr.nodes[node_id]
        if not (before.expanded and after.expanded):
            continue
        fields: set[str] = set()
        old_attrs = before.attribute_map()
        new_attrs = after.attribute_map()
        for name in old_attrs.keys() | new_attrs.keys():
            if old_attrs.get(name) != new_attrs.get(name):
                fields.add(name)
        old_links = prev_out.get(node_id, set())
        new_links = curr_out.get(node_id, set())
        fields.update(field_name for field_name, _ in old_links ^ new_links)
        if fields:
            changed[node_id] = frozenset(fields)

    return ChangeSet(
        added_nodes=added,
        changed_nodes=changed,
        removed_nodes=removed,
        added_links=frozenset(curr.links - prev.links),
        removed_links=frozenset(prev.links - curr.links),
    )


def _outgoing_index(graph: ObjectGraph) -> dict[StableId, set[tuple[str, StableId]]]:
    index: dict[StableId, set[tuple[str, StableId]]] = {}
    for link in graph.links:
        index.setdefault(link.source, set()).add((link.field_name, link.target))
    return index


def apply_changes(
    prev: ObjectGraph,
    changes: ChangeSet,
    node_payloads: Mapping[StableId, ObjectNode],
    *,
    location: SourceLocation | None = None,
    roots: tuple[RootBinding, ...] | None = None,
) -> ObjectGraph:
    """Patch ``prev`` forward with a change set produced by :func:`diff`.

    ``node_payloads`` must supply the full node for every added and
    changed id. The result matches the target snapshot everywhere the
    diff could see, i.e. restricted to content expanded on both sides;
    pass the target's location/roots to carry the parts a change set does
    not encode.
    """
    payload_ids = set(node_payloads)
    expected = set(changes.added_nodes) | set(changes.changed_nodes)
    if payload_ids != expected:
        missing = sorted(i.wire() for i in expected - payload_ids)
        extra = sorted(i.wire() for i in payload_ids - expected)
        raise DanglingChangeError(f"payload mismatch: missing {missing}, unexpected {extra}")
    for node_id in changes.removed_nodes | set(changes.changed_nodes):
        if node_id not in prev.nodes:
            raise DanglingChangeError(f"change references unknown node {node_id.wire()!r}")
    for node_id in changes.added_nodes:
        if node_id in prev.nodes:
            raise DanglingChangeError(f"added node {node_id.wire()!r} already present")

    nodes = dict(prev.nodes)
    for node_id in changes.removed_nodes:
        del nodes[node_id]
    for node_id, payload in node_payloads.items():
        nodes[node_id] = payload
    links = (prev.links - changes.removed_links) | changes.added_links
    # a node that gained links was expanded on the other side even if the
    # change set had no reason to mention it
    for link in changes.added_links:
        source = nodes.get(link.source)
        if source is not None and not source.expanded:
            nodes[link.source] = replace(source, expanded=True)
    result = ObjectGraph(
        location=location or prev.location,
        roots=roots if roots is not None else prev.roots,
        nodes=nodes,
        links=links,
    )
    return result.validate()
