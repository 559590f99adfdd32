"""vdbridge: drive any DAP debug adapter and push object diagrams to clients.

The bridge pauses with the debuggee, turns stack-frame variables into a
depth-limited object graph with stable identities, diffs it against the
previous step, keeps a bounded history, and broadcasts everything over
the WebSocket-based Visual Debugging API.
"""

from .diffing import ChangeSet, diff
from .graph import (
    BuildConfig,
    Link,
    ObjectGraph,
    ObjectNode,
    SourceLocation,
    StableId,
    build_graph,
    deserialize_graph,
    merge_children,
    serialize_graph,
)
from .history import HistoryEntry, HistoryStore
from .session import AdapterSpec, DapSession, RawVariable, StopInfo, start_session

__version__ = "0.1.0"

__all__ = [
    "AdapterSpec",
    "BuildConfig",
    "ChangeSet",
    "DapSession",
    "HistoryEntry",
    "HistoryStore",
    "Link",
    "ObjectGraph",
    "ObjectNode",
    "RawVariable",
    "SourceLocation",
    "StableId",
    "StopInfo",
    "build_graph",
    "deserialize_graph",
    "diff",
    "merge_children",
    "serialize_graph",
    "start_session",
]
