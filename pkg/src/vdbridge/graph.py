"""Object-diagram model and the builder that turns raw variable trees into it.

Graphs are immutable values: building and merging produce new graphs.
Identity is durable across steps, either from adapter memory references or
from the canonical discovery path; null-valued variables vanish entirely;
expansion is bounded by a breadth-first depth limit and continues lazily
on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Awaitable, Callable, Mapping, NamedTuple, Sequence

if TYPE_CHECKING:
    from .session import RawVariable

MEMORY = "memory"
PATH = "path"

DEFAULT_NULL_LITERALS = ("null", "nil", "None", "<null>")

# Shown inline as attribute values even when the adapter hands out a
# children reference for them (string internals are noise in a diagram).
DEFAULT_STRING_TYPES = frozenset(
    {"string", "str", "java.lang.string", "std::string", "char*", "nsstring"}
)


class GraphError(Exception):
    """Base class for graph failures."""


class GraphIntegrityError(GraphError):
    """A graph value violates referential closure or field uniqueness."""


class MergeError(GraphError):
    """merge_children called with an unknown or already-expanded parent."""


class PartialGraphError(GraphError):
    """A fetch failed mid-build; carries the consistent prefix graph."""

    def __init__(self, message: str, prefix: "ObjectGraph"):
        super().__init__(message)
        self.prefix = prefix


@dataclass(frozen=True)
class StableId:
    """Durable object identity: a memory reference or a canonical path."""

    strategy: str
    key: str

    def __post_init__(self) -> None:
        if self.strategy not in (MEMORY, PATH):
            raise ValueError(f"unknown identity strategy {self.strategy!r}")

    def wire(self) -> str:
        return f"{self.strategy}:{self.key}"

    @classmethod
    def parse(cls, text: str) -> "StableId":
        strategy, sep, key = text.partition(":")
        if not sep or strategy not in (MEMORY, PATH):
            raise ValueError(f"not a stable id: {text!r}")
        return cls(strategy=strategy, key=key)

    def __lt__(self, other: "StableId") -> bool:
        return (self.strategy, self.key) < (other.strategy, other.key)


class Attribute(NamedTuple):
    name: str
    type_name: str
    value: str


@dataclass(frozen=True)
class ObjectNode:
    """One object box: typed header plus primitive attribute rows.

    ``transient_ref`` and ``path`` are runtime bookkeeping (current-stop
    adapter reference, canonical discovery path); they never travel on the
    wire and do not participate in equality.
    """

    id: StableId
    type_name: str
    attributes: tuple[Attribute, ...]
    expanded: bool
    transient_ref: int = field(default=0, compare=False)
    path: str | None = field(default=None, compare=False)

    def attribute_map(self) -> dict[str, str]:
        return {a.name: a.value for a in self.attributes}


@dataclass(frozen=True)
class Link:
    source: StableId
    field_name: str
    target: StableId


@dataclass(frozen=True)
class SourceLocation:
    file: str
    line: int
    method: str | None = None

    def __post_init__(self) -> None:
        if self.line < 1:
            raise ValueError(f"line must be >= 1, got {self.line}")

    def wire(self) -> dict[str, Any]:
        return {"file": self.file, "line": self.line, "method": self.method}


@dataclass(frozen=True)
class RootBinding:
    """A frame variable: either a primitive (type, value) or a node id."""

    name: str
    node_id: StableId | None = None
    primitive: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if (self.node_id is None) == (self.primitive is None):
            raise ValueError("root binding needs exactly one of node_id or primitive")


@dataclass(frozen=True)
class ObjectGraph:
    """All objects, links, and root bindings visible at one paused frame."""

    location: SourceLocation
    roots: tuple[RootBinding, ...]
    nodes: Mapping[StableId, ObjectNode]
    links: frozenset[Link]

    @classmethod
    def empty(cls, location: SourceLocation) -> "ObjectGraph":
        return cls(location=location, roots=(), nodes={}, links=frozenset())

    def node(self, node_id: StableId) -> ObjectNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GraphIntegrityError(f"no node {node_id.wire()!r} in graph") from None

    def outgoing(self, node_id: StableId) -> set[Link]:
        return {link for link in self.links if link.source == node_id}

    def validate(self) -> "ObjectGraph":
        for node_id, node in self.nodes.items():
            if node.id != node_id:
                raise GraphIntegrityError(f"node keyed {node_id.wire()!r} carries id {node.id.wire()!r}")
            names = [a.name for a in node.attributes]
            if len(names) != len(set(names)):
                raise GraphIntegrityError(f"duplicate attribute names on {node_id.wire()!r}")
        sources_with_links = set()
        for link in self.links:
            for endpoint in (link.source, link.target):
                if endpoint not in self.nodes:
                    raise GraphIntegrityError(f"link endpoint {endpoint.wire()!r} not in graph")
            sources_with_links.add(link.source)
        for node_id in sources_with_links:
            if not self.nodes[node_id].expanded:
                raise GraphIntegrityError(
                    f"unexpanded node {node_id.wire()!r} must not have outgoing links"
                )
        for root in self.roots:
            if root.node_id is not None and root.node_id not in self.nodes:
                raise GraphIntegrityError(f"root {root.name!r} binds missing node")
        return self


@dataclass(frozen=True)
class BuildConfig:
    """Knobs shared by build and merge: identity choice and null handling."""

    identity: str = "auto"
    null_literals: tuple[str, ...] = DEFAULT_NULL_LITERALS
    string_types: frozenset[str] = DEFAULT_STRING_TYPES

    def __post_init__(self) -> None:
        if self.identity not in ("auto", MEMORY, PATH):
            raise ValueError(f"unknown identity config {self.identity!r}")

    def is_null(self, var: "RawVariable") -> bool:
        return var.variables_reference == 0 and var.value in self.null_literals

    def is_string(self, var: "RawVariable") -> bool:
        return (var.type_name or "").lower() in self.string_types


def assign_identity(root_path: str, memory_reference: str | None, config: BuildConfig) -> StableId:
    """Memory identity when available and allowed, canonical path otherwise."""
    if memory_reference and config.identity in ("auto", MEMORY):
        return StableId(strategy=MEMORY, key=memory_reference)
    return StableId(strategy=PATH, key=root_path)


@dataclass
class FrameView:
    """What the builder needs from a paused frame: scopes plus lazy fetches."""

    location: SourceLocation
    scopes: Sequence[tuple[str, int]]
    fetch_children: Callable[[int], Awaitable[Sequence["RawVariable"]]]


def _alias_key(var: "RawVariable") -> tuple[str, Any]:
    if var.memory_reference:
        return ("mem", var.memory_reference)
    return ("ref", var.variables_reference)


class _Draft:
    """Mutable node under construction."""

    __slots__ = ("id", "type_name", "attributes", "expanded", "ref", "path")

    def __init__(self, node_id: StableId, type_name: str, ref: int, path: str):
        self.id = node_id
        self.type_name = type_name
        self.attributes: list[Attribute] = []
        self.expanded = False
        self.ref = ref
        self.path = path

    def freeze(self) -> ObjectNode:
        return ObjectNode(
            id=self.id,
            type_name=self.type_name,
            attributes=tuple(self.attributes),
            expanded=self.expanded,
            transient_ref=self.ref,
            path=self.path,
        )


class _Builder:
    def __init__(self, config: BuildConfig):
        self.config = config
        self.drafts: dict[StableId, _Draft] = {}
        self.links: set[Link] = set()
        self.alias: dict[tuple[str, Any], StableId] = {}

    def settle_level(
        self, candidates: list[tuple[str, "RawVariable"]]
    ) -> tuple[dict[str, StableId], list[_Draft]]:
        """Assign identities for one breadth-first level of object children.

        Candidates carry their would-be path. All paths in one level have
        the same segment count, so the canonical choice for an object seen
        through several paths is the lexicographic minimum; the result is
        independent of scope or sibling order.
        """
        groups: dict[tuple[str, Any], list[tuple[str, "RawVariable"]]] = {}
        for path, var in candidates:
            groups.setdefault(_alias_key(var), []).append((path, var))
        resolved: dict[str, StableId] = {}
        created: list[_Draft] = []
        for key, entries in groups.items():
            existing = self.alias.get(key)
            if existing is None:
                canonical, var = min(entries, key=lambda item: item[0])
                node_id = assign_identity(canonical, var.memory_reference, self.config)
                if node_id in self.drafts:
                    raise GraphIntegrityError(f"identity collision on {node_id.wire()!r}")
                draft = _Draft(node_id, var.type_name or "", var.variables_reference, canonical)
                self.drafts[node_id] = draft
                self.alias[key] = node_id
                created.append(draft)
                existing = node_id
            for path, _ in entries:
                resolved[path] = existing
        # keep discovery order deterministic: sort new drafts by their path
        created.sort(key=lambda d: d.path)
        return resolved, created

    def attach_children(
        self, parent: _Draft, children: Sequence["RawVariable"]
    ) -> tuple[list[tuple[str, "RawVariable"]], list[tuple[StableId, str, str]]]:
        """Fold fetched children into the parent.

        Returns the object-child candidates (path, variable) and the links
        that must be added once those candidates have identities.
        """
        candidates: list[tuple[str, "RawVariable"]] = []
        wanted_links: list[tuple[StableId, str, str]] = []  # (source, field, child path)
        used_fields: set[str] = set()
        for var in children:
            if self.config.is_null(var):
                continue
            name = _dedupe(var.name, used_fields)
            used_fields.add(name)
            if var.variables_reference == 0 or self.config.is_string(var):
                parent.attributes.append(Attribute(name, var.type_name or "", var.value))
            else:
                child_path = f"{parent.path}/{name}"
                candidates.append((child_path, var))
                wanted_links.append((parent.id, name, child_path))
        parent.expanded = True
        return candidates, wanted_links


def _dedupe(name: str, used: set[str]) -> str:
    if name not in used:
        return name
    k = 2
    while f"{name}#{k}" in used:
        k += 1
    return f"{name}#{k}"


async def build_graph(
    view: FrameView,
    depth_limit: int,
    prev: ObjectGraph | None = None,
    *,
    config: BuildConfig | None = None,
) -> ObjectGraph:
    """Breadth-first build from the frame's variables, depth-limited.

    Nodes within ``depth_limit`` link-distance of a root get expanded;
    nodes exactly at the limit are present but unexpanded. Nulls are
    dropped before they produce anything. ``prev`` is accepted as identity
    context: identities themselves are deterministic per snapshot, so it
    only participates in sanity checks today.
    """
    if depth_limit < 0:
        raise ValueError("depth_limit must be >= 0")
    config = config or BuildConfig()
    builder = _Builder(config)

    root_vars: list["RawVariable"] = []
    try:
        for _scope_name, scope_ref in view.scopes:
            if scope_ref > 0:
                root_vars.extend(await view.fetch_children(scope_ref))
    except PartialGraphError:
        raise
    except Exception as exc:
        raise PartialGraphError(
            f"fetching frame variables failed: {exc}", ObjectGraph.empty(view.location)
        ) from exc

    roots: list[RootBinding] = []
    used_names: set[str] = set()
    level_candidates: list[tuple[str, "RawVariable"]] = []
    root_paths: list[tuple[str, str]] = []  # (root name, path) for object roots
    for var in root_vars:
        if config.is_null(var):
            continue
        name = _dedupe(var.name, used_names)
        used_names.add(name)
        if var.variables_reference == 0 or config.is_string(var):
            roots.append(RootBinding(name=name, primitive=(var.type_name or "", var.value)))
        else:
            level_candidates.append((name, var))
            root_paths.append((name, name))

    resolutions, frontier = builder.settle_level(level_candidates)
    for name, path in root_paths:
        roots.append(RootBinding(name=name, node_id=resolutions[path]))

    for _depth in range(depth_limit):
        if not frontier:
            break
        fetched: list[tuple[_Draft, Sequence["RawVariable"]]] = []
        for draft in frontier:
            try:
                children = await view.fetch_children(draft.ref)
            except Exception as exc:
                raise PartialGraphError(
                    f"fetching children of {draft.id.wire()!r} failed: {exc}",
                    _finalize(builder, view.location, roots),
                ) from exc
            fetched.append((draft, children))
        level_candidates = []
        links_wanted: list[tuple[StableId, str, str]] = []
        for draft, children in fetched:
            candidates, wanted = builder.attach_children(draft, children)
            level_candidates.extend(candidates)
            links_wanted.extend(wanted)
        resolutions, frontier = builder.settle_level(level_candidates)
        for source, field_name, child_path in links_wanted:
            builder.links.add(Link(source=source, field_name=field_name, target=resolutions[child_path]))

    return _finalize(builder, view.location, roots)


def _finalize(builder: _Builder, location: SourceLocation, roots: list[RootBinding]) -> ObjectGraph:
    nodes = {draft.id: draft.freeze() for draft in builder.drafts.values()}
    graph = ObjectGraph(
        location=location, roots=tuple(roots), nodes=nodes, links=frozenset(builder.links)
    )
    return graph.validate()


def merge_children(
    graph: ObjectGraph,
    parent: StableId,
    children: Sequence["RawVariable"],
    prev: ObjectGraph | None = None,
    *,
    config: BuildConfig | None = None,
) -> ObjectGraph:
    """Expand one unexpanded node with its fetched children.

    Primitive children become the parent's attributes, reference children
    become links to existing nodes (matched by adapter reference or memory
    reference, which keeps cycles intact) or to new unexpanded nodes.
    Everything else in the graph is untouched.
    """
    config = config or BuildConfig()
    node = graph.nodes.get(parent)
    if node is None:
        raise MergeError(f"unknown parent {parent.wire()!r}")
    if node.expanded:
        raise MergeError(f"parent {parent.wire()!r} is already expanded")

    by_ref: dict[int, StableId] = {
        n.transient_ref: nid for nid, n in graph.nodes.items() if n.transient_ref > 0
    }
    by_memory: dict[str, StableId] = {
        nid.key: nid for nid in graph.nodes if nid.strategy == MEMORY
    }

    base_path = node.path or node.id.key
    attributes: list[Attribute] = []
    new_nodes: dict[StableId, ObjectNode] = {}
    new_links: set[Link] = set()
    used_fields: set[str] = set()
    for var in children:
        if config.is_null(var):
            continue
        name = _dedupe(var.name, used_fields)
        used_fields.add(name)
        if var.variables_reference == 0 or config.is_string(var):
            attributes.append(Attribute(name, var.type_name or "", var.value))
            continue
        target = by_ref.get(var.variables_reference)
        if target is None and var.memory_reference:
            target = by_memory.get(var.memory_reference)
        if target is None:
            child_path = f"{base_path}/{name}"
            target = assign_identity(child_path, var.memory_reference, config)
            if target not in graph.nodes and target not in new_nodes:
                new_nodes[target] = ObjectNode(
                    id=target,
                    type_name=var.type_name or "",
                    attributes=(),
                    expanded=False,
                    transient_ref=var.variables_reference,
                    path=child_path,
                )
            by_ref[var.variables_reference] = target
        new_links.add(Link(source=parent, field_name=name, target=target))

    nodes = dict(graph.nodes)
    nodes.update(new_nodes)
    nodes[parent] = replace(node, attributes=tuple(attributes), expanded=True)
    merged = ObjectGraph(
        location=graph.location,
        roots=graph.roots,
        nodes=nodes,
        links=graph.links | new_links,
    )
    return merged.validate()


# -- wire document -----------------------------------------------------------


def serialize_graph(graph: ObjectGraph) -> dict[str, Any]:
    """Deterministic document form: the export format and the API payload."""
    roots = []
    for root in graph.roots:
        if root.node_id is not None:
            roots.append({"name": root.name, "nodeId": root.node_id.wire()})
        else:
            assert root.primitive is not None
            rtype, rvalue = root.primitive
            roots.append({"name": root.name, "primitive": {"type": rtype, "value": rvalue}})
    nodes = [
        {
            "id": node.id.wire(),
            "type": node.type_name,
            "attributes": [
                {"name": a.name, "type": a.type_name, "value": a.value} for a in node.attributes
            ],
            "expanded": node.expanded,
        }
        for node in sorted(graph.nodes.values(), key=lambda n: n.id)
    ]
    links = [
        {"source": link.source.wire(), "field": link.field_name, "target": link.target.wire()}
        for link in sorted(graph.links, key=lambda l: (l.source, l.field_name, l.target))
    ]
    return {"location": graph.location.wire(), "roots": roots, "nodes": nodes, "links": links}


def deserialize_graph(doc: Mapping[str, Any]) -> ObjectGraph:
    """Inverse of serialize_graph; adapter references do not round-trip."""
    loc = doc["location"]
    location = SourceLocation(file=loc["file"], line=loc["line"], method=loc.get("method"))
    roots = []
    for entry in doc["roots"]:
        if "nodeId" in entry:
            roots.append(RootBinding(name=entry["name"], node_id=StableId.parse(entry["nodeId"])))
        else:
            prim = entry["primitive"]
            roots.append(RootBinding(name=entry["name"], primitive=(prim["type"], prim["value"])))
    nodes = {}
    for entry in doc["nodes"]:
        node_id = StableId.parse(entry["id"])
        nodes[node_id] = ObjectNode(
            id=node_id,
            type_name=entry["type"],
            attributes=tuple(
                Attribute(a["name"], a["type"], a["value"]) for a in entry["attributes"]
            ),
            expanded=entry["expanded"],
        )
    links = frozenset(
        Link(
            source=StableId.parse(entry["source"]),
            field_name=entry["field"],
            target=StableId.parse(entry["target"]),
        )
        for entry in doc["links"]
    )
    return ObjectGraph(location=location, roots=tuple(roots), nodes=nodes, links=links).validate()
