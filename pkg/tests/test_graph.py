from __future__ import annotations

import asyncio
import json
import random

import pytest

from vdbridge.graph import (
    Attribute,
    BuildConfig,
    FrameView,
    GraphIntegrityError,
    Link,
    MergeError,
    ObjectGraph,
    ObjectNode,
    PartialGraphError,
    RootBinding,
    SourceLocation,
    StableId,
    assign_identity,
    build_graph,
    deserialize_graph,
    merge_children,
    serialize_graph,
)
from vdbridge.mock_adapter import Scenario
from vdbridge.session import RawVariable

from graphgen import random_graph

LOC = SourceLocation(file="demo.py", line=3, method="main")


def make_view(tree: dict[str, list], scopes=None) -> FrameView:
    """FrameView over a literal ref->children table (ref 1 is the scope)."""

    async def fetch(ref: int):
        return list(tree[ref])

    return FrameView(location=LOC, scopes=scopes or [("Locals", 1)], fetch_children=fetch)


def leaf(name, value, type_name="int"):
    return RawVariable(name=name, value=value, type_name=type_name, variables_reference=0)


def obj(name, ref, value=None, type_name="Node", memory=None):
    return RawVariable(
        name=name,
        value=value or f"{type_name}@{ref}",
        type_name=type_name,
        variables_reference=ref,
        memory_reference=memory,
    )


def build(view, depth, prev=None, **config):
    return asyncio.run(build_graph(view, depth, prev, config=BuildConfig(**config)))


def test_depth_zero_primitive_root():
    graph = build(make_view({1: [leaf("x", "5")]}), 0)
    assert graph.roots == (RootBinding(name="x", primitive=("int", "5")),)
    assert not graph.nodes and not graph.links


def test_depth_zero_object_root_is_unexpanded_node():
    graph = build(make_view({1: [obj("tree", 2)]}), 0)
    [node] = graph.nodes.values()
    assert not node.expanded and node.attributes == ()
    assert graph.roots[0].node_id == node.id
    assert not graph.links


def test_bst_depth_two_shape(bst_scenario: Scenario):
    graph = asyncio.run(build_graph(bst_scenario.frame_view(0), 2))
    assert {n.id.key for n in graph.nodes.values()} == {"0x1001", "0x1002", "0x1003"}
    root = graph.nodes[StableId("memory", "0x1001")]
    assert root.expanded
    assert root.attribute_map() == {"value": "5"}
    assert {(l.field_name, l.target.key) for l in graph.outgoing(root.id)} == {
        ("left", "0x1002"),
        ("right", "0x1003"),
    }


def test_null_children_vanish_entirely():
    tree = {
        1: [obj("node", 2)],
        2: [leaf("value", "3"), leaf("left", "null", "Node"), obj("right", 3)],
        3: [leaf("value", "8")],
    }
    graph = build(make_view(tree), 2)
    node = graph.nodes[StableId("path", "node")]
    assert node.attribute_map() == {"value": "3"}
    assert {l.field_name for l in graph.outgoing(node.id)} == {"right"}


def test_custom_null_literals():
    tree = {1: [obj("a", 2)], 2: [leaf("gone", "MISSING", "Obj"), leaf("kept", "null", "Obj")]}
    graph = build(make_view(tree), 1, null_literals=("MISSING",))
    node = graph.nodes[StableId("path", "a")]
    assert node.attribute_map() == {"kept": "null"}


def test_string_with_reference_stays_attribute():
    tree = {1: [obj("a", 2)], 2: [obj("name", 3, value='"Ada"', type_name="String")]}
    graph = build(make_view(tree), 2)
    node = graph.nodes[StableId("path", "a")]
    assert node.attribute_map() == {"name": '"Ada"'}
    assert len(graph.nodes) == 1


def test_memory_identity_preferred_under_auto():
    assert assign_identity("tree/root", "0x7f3a", BuildConfig()) == StableId("memory", "0x7f3a")
    assert assign_identity("tree/root", None, BuildConfig()) == StableId("path", "tree/root")
    assert assign_identity("tree/root", "0x7f3a", BuildConfig(identity="path")) == StableId(
        "path", "tree/root"
    )
    # memory strategy falls back to path when the adapter gives no reference
    assert assign_identity("tree/root", None, BuildConfig(identity="memory")) == StableId(
        "path", "tree/root"
    )


def test_canonical_path_prefers_shallower_discovery():
    # one object reachable as list/0 (level 1) and tree/root/left (level 2)
    shared = 9
    tree_a = {
        1: [obj("tree", 2), obj("list", 3)],
        2: [obj("root", 4)],
        3: [obj("0", shared)],
        4: [obj("left", shared)],
        shared: [leaf("value", "1")],
    }
    tree_b = {  # scopes present the roots in the opposite order
        1: [obj("list", 3), obj("tree", 2)],
        2: [obj("root", 4)],
        3: [obj("0", shared)],
        4: [obj("left", shared)],
        shared: [leaf("value", "1")],
    }
    for tree in (tree_a, tree_b):
        graph = build(make_view(tree), 3)
        keys = {n.id.key for n in graph.nodes.values()}
        assert "list/0" in keys
        assert "tree/root/left" not in keys


def test_canonical_path_same_level_tie_breaks_lexicographically():
    shared = 5
    tree = {1: [obj("zeta", shared), obj("alpha", shared)], shared: [leaf("v", "1")]}
    graph = build(make_view(tree), 1)
    [node] = graph.nodes.values()
    assert node.id == StableId("path", "alpha")
    assert {r.name for r in graph.roots} == {"zeta", "alpha"}
    assert all(r.node_id == node.id for r in graph.roots)


def test_aliased_object_is_single_node_with_two_links():
    shared = 7
    tree = {1: [obj("a", 2), obj("b", 3)], 2: [obj("x", shared)], 3: [obj("y", shared)], shared: []}
    graph = build(make_view(tree), 2)
    assert len(graph.nodes) == 3
    targets = [l.target for l in graph.links if l.field_name in ("x", "y")]
    assert len(set(targets)) == 1


def test_cycle_produces_single_nodes(cyclic_scenario: Scenario):
    graph = asyncio.run(build_graph(cyclic_scenario.frame_view(0), 4))
    # ring + two nodes, visited once each despite the cycle
    assert len(graph.nodes) == 3
    node_a = next(n for n in graph.nodes.values() if n.attribute_map().get("label") == '"A"')
    node_b = next(n for n in graph.nodes.values() if n.attribute_map().get("label") == '"B"')
    assert Link(source=node_a.id, field_name="next", target=node_b.id) in graph.links
    assert Link(source=node_b.id, field_name="next", target=node_a.id) in graph.links


def test_depth_bound_invariant(deep_scenario: Scenario):
    for depth in (0, 1, 2, 3):
        graph = asyncio.run(build_graph(deep_scenario.frame_view(0), depth))
        distances = link_distances(graph)
        for node_id, node in graph.nodes.items():
            if node.expanded:
                assert distances[node_id] < depth
            else:
                assert distances[node_id] == depth


def link_distances(graph: ObjectGraph) -> dict[StableId, int]:
    frontier = [r.node_id for r in graph.roots if r.node_id is not None]
    distances = {node_id: 0 for node_id in frontier}
    while frontier:
        nxt = []
        for node_id in frontier:
            for link in graph.outgoing(node_id):
                if link.target not in distances:
                    distances[link.target] = distances[node_id] + 1
                    nxt.append(link.target)
        frontier = nxt
    return distances


def test_duplicate_root_names_are_disambiguated():
    tree = {1: [leaf("x", "1"), leaf("x", "2")]}
    graph = build(make_view(tree), 1)
    assert [r.name for r in graph.roots] == ["x", "x#2"]


def test_identity_determinism(deep_scenario: Scenario):
    g1 = asyncio.run(build_graph(deep_scenario.frame_view(0), 3))
    g2 = asyncio.run(build_graph(deep_scenario.frame_view(0), 3))
    assert g1 == g2
    assert set(g1.nodes) == set(g2.nodes)


def test_fetch_failure_raises_partial_graph():
    calls = {"n": 0}

    async def flaky(ref: int):
        calls["n"] += 1
        if ref == 3:
            raise RuntimeError("adapter went away")
        return {1: [obj("a", 2)], 2: [obj("b", 3)]}[ref]

    view = FrameView(location=LOC, scopes=[("Locals", 1)], fetch_children=flaky)
    with pytest.raises(PartialGraphError) as info:
        asyncio.run(build_graph(view, 5))
    prefix = info.value.prefix
    prefix.validate()
    assert StableId("path", "a") in prefix.nodes


# -- merge -------------------------------------------------------------------


def expand(graph, node_id, children, **config):
    return merge_children(graph, node_id, children, config=BuildConfig(**config))


def test_merge_reveals_only_new_children(deep_scenario: Scenario):
    view = deep_scenario.frame_view(0)
    graph = asyncio.run(build_graph(view, 2))
    frontier_id = StableId("path", "chain/next/next")
    assert not graph.nodes[frontier_id].expanded
    children = [leaf("tag", '"level-3"', "String"), obj("next", 99, type_name="Segment")]
    merged = expand(graph, frontier_id, children)
    parent = merged.nodes[frontier_id]
    assert parent.expanded and parent.attribute_map() == {"tag": '"level-3"'}
    new_id = StableId("path", "chain/next/next/next")
    assert new_id in merged.nodes and not merged.nodes[new_id].expanded
    assert Link(source=frontier_id, field_name="next", target=new_id) in merged.links
    # nothing else moved
    assert {k for k in merged.nodes} - {k for k in graph.nodes} == {new_id}


def test_merge_empty_children_marks_expanded_only():
    graph = build(make_view({1: [obj("a", 2)]}), 0)
    node_id = StableId("path", "a")
    merged = expand(graph, node_id, [])
    assert merged.nodes[node_id].expanded
    assert merged.nodes[node_id].attributes == ()
    assert merged.links == graph.links


def test_merge_unknown_parent_rejected():
    graph = build(make_view({1: [obj("a", 2)]}), 0)
    with pytest.raises(MergeError):
        expand(graph, StableId("path", "ghost"), [])


def test_merge_expanded_parent_rejected():
    graph = build(make_view({1: [obj("a", 2)], 2: []}), 1)
    with pytest.raises(MergeError):
        expand(graph, StableId("path", "a"), [])


def test_merge_cycle_links_existing_node():
    # parent pointer cycle: expanding the child links back to the parent
    tree = {1: [obj("root", 2)], 2: [obj("child", 3)]}
    graph = build(make_view(tree), 1)
    child_id = StableId("path", "root/child")
    parent_ref = graph.nodes[StableId("path", "root")].transient_ref
    merged = expand(graph, child_id, [obj("parent", parent_ref, type_name="Node")])
    assert len(merged.nodes) == len(graph.nodes)
    assert Link(source=child_id, field_name="parent", target=StableId("path", "root")) in merged.links


def test_merge_does_not_touch_original_graph(deep_scenario: Scenario):
    graph = asyncio.run(build_graph(deep_scenario.frame_view(0), 2))
    before = serialize_graph(graph)
    expand(graph, StableId("path", "chain/next/next"), [leaf("tag", '"x"', "String")])
    assert serialize_graph(graph) == before


# -- serialization -----------------------------------------------------------


def test_empty_graph_document():
    doc = serialize_graph(ObjectGraph.empty(LOC))
    assert doc == {
        "location": {"file": "demo.py", "line": 3, "method": "main"},
        "roots": [],
        "nodes": [],
        "links": [],
    }


def test_serialize_round_trip_generated():
    rng = random.Random(21)
    for _ in range(200):
        graph = random_graph(rng)
        assert deserialize_graph(serialize_graph(graph)) == graph


def test_serialization_is_order_independent():
    nodes = {}
    for key in ("b", "a", "c"):
        node_id = StableId("path", key)
        nodes[node_id] = ObjectNode(
            id=node_id, type_name="T", attributes=(Attribute("v", "int", key),), expanded=True
        )
    links = [
        Link(StableId("path", "a"), "x", StableId("path", "b")),
        Link(StableId("path", "b"), "y", StableId("path", "c")),
    ]
    roots = (RootBinding(name="a", node_id=StableId("path", "a")),)
    g1 = ObjectGraph(location=LOC, roots=roots, nodes=nodes, links=frozenset(links))
    g2 = ObjectGraph(
        location=LOC,
        roots=roots,
        nodes=dict(reversed(list(nodes.items()))),
        links=frozenset(reversed(links)),
    )
    assert g1 == g2
    assert json.dumps(serialize_graph(g1)) == json.dumps(serialize_graph(g2))


def test_validate_rejects_dangling_link():
    node_id = StableId("path", "a")
    node = ObjectNode(id=node_id, type_name="T", attributes=(), expanded=True)
    graph = ObjectGraph(
        location=LOC,
        roots=(),
        nodes={node_id: node},
        links=frozenset({Link(node_id, "x", StableId("path", "ghost"))}),
    )
    with pytest.raises(GraphIntegrityError):
        graph.validate()


def test_validate_rejects_links_from_unexpanded_node():
    a, b = StableId("path", "a"), StableId("path", "b")
    nodes = {
        a: ObjectNode(id=a, type_name="T", attributes=(), expanded=False),
        b: ObjectNode(id=b, type_name="T", attributes=(), expanded=False),
    }
    graph = ObjectGraph(location=LOC, roots=(), nodes=nodes, links=frozenset({Link(a, "x", b)}))
    with pytest.raises(GraphIntegrityError):
        graph.validate()
