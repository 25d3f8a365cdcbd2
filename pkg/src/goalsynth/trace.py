"""Abstract world-state traces and the line-delimited trace file format.

A trace file is UTF-8 with one YAML flow mapping per line. The first record is
the header::

    {trace: t1, objects: [{id: ball1, type: dodgeball_red}, {id: bed, type: bed}]}

Every later record is one state::

    {state: 0, agent: {position: [0, 0, 0], crouching: false},
     objects: {ball1: {position: [1, 0, 2], held: true}}, in: [], on: [[bed, ball1]]}

State 0 must carry a position for every catalog object. Later states list only
the fluents that changed; relation lists (``in``, ``on``, ``touch``) replace the
previous lists when present and carry over when absent. Blank lines and lines
starting with ``#`` are skipped.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import yaml

from . import vocabulary as vocab
from .exceptions import TraceFormatError, ValidationError
from .logger import get_logger

logger = get_logger(__name__)

TRACE_SUFFIX = ".trace"
AGENT = "agent"
BUILDING = "building"

Vector = Tuple[float, float, float]

_FLUENTS = ("in_motion", "held", "open", "toggled_on", "broken")
_RELATIONS = ("in", "on", "touch")


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    type: str
    color: Optional[str] = None


@dataclass(frozen=True)
class ObjectState:
    position: Vector
    orientation: Optional[str] = None
    in_motion: bool = False
    held: bool = False
    open: bool = False
    toggled_on: bool = False
    broken: bool = False


@dataclass(frozen=True)
class WorldState:
    """One abstract environment state.

    ``contains`` holds (container, containee) pairs, ``supports`` holds
    (base, top) pairs, and ``touches`` holds both orders of every touch pair.
    ``buildings`` maps a virtual building id to its member blocks.
    """
    index: int
    objects: Dict[str, ObjectState]
    agent_position: Vector
    crouching: bool
    contains: FrozenSet[Tuple[str, str]]
    supports: FrozenSet[Tuple[str, str]]
    touches: FrozenSet[Tuple[str, str]]
    is_first_state: bool
    is_last_state: bool
    catalog: Dict[str, CatalogEntry] = field(compare=False, repr=False)
    buildings: Dict[str, FrozenSet[str]] = field(default_factory=dict)

    def has(self, obj: str) -> bool:
        return obj == AGENT or obj in self.objects or obj in self.buildings

    def type_of(self, obj: str) -> Optional[str]:
        if obj == AGENT:
            return AGENT
        if obj in self.buildings:
            return BUILDING
        entry = self.catalog.get(obj)
        return entry.type if entry else None

    def color_of(self, obj: str) -> Optional[str]:
        entry = self.catalog.get(obj)
        return entry.color if entry else None

    def position(self, obj: str) -> Optional[Vector]:
        if obj == AGENT:
            return self.agent_position
        if obj in self.objects:
            return self.objects[obj].position
        if obj in self.buildings:
            members = [self.objects[m].position for m in self.buildings[obj]]
            n = len(members)
            return tuple(sum(p[i] for p in members) / n for i in range(3))
        return None

    def candidates(self, types: Sequence[str]) -> List[str]:
        """Objects present in this state whose type matches any of `types`."""
        return [o for o in _all_ids(self.catalog, self.buildings)
                if self.has(o) and _matches(self.type_of(o), types)]


def _all_ids(catalog: Dict[str, CatalogEntry], buildings: Iterable[str]) -> List[str]:
    return sorted(set(catalog) | set(buildings))


def _matches(type_name: Optional[str], types: Sequence[str]) -> bool:
    return type_name is not None and any(vocab.is_subtype(type_name, t) for t in types)


@dataclass(frozen=True)
class Trace:
    id: str
    catalog: Dict[str, CatalogEntry]
    states: Tuple[WorldState, ...]
    source: Optional[Path] = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def building_ids(self) -> List[str]:
        return sorted({b for s in self.states for b in s.buildings})

    def type_of(self, obj: str) -> Optional[str]:
        if obj == AGENT:
            return AGENT
        if obj in self.catalog:
            return self.catalog[obj].type
        if obj.startswith(f"{BUILDING}:"):
            return BUILDING
        return None

    def candidates(self, types: Sequence[str]) -> List[str]:
        """Every object of the trace (buildings included) matching any of `types`."""
        return [o for o in _all_ids(self.catalog, self.building_ids)
                if _matches(self.type_of(o), types)]


def compute_buildings(supports: Iterable[Tuple[str, str]],
                      catalog: Dict[str, CatalogEntry]) -> Dict[str, FrozenSet[str]]:
    """Connected components of the block support graph with at least two blocks."""
    blocks = {o for o, e in catalog.items() if vocab.is_subtype(e.type, "block")}
    parent = {b: b for b in blocks}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for base, top in supports:
        if base in blocks and top in blocks:
            parent[find(base)] = find(top)

    groups: Dict[str, set] = {}
    for b in blocks:
        groups.setdefault(find(b), set()).add(b)

    out = {}
    for members in groups.values():
        if len(members) >= 2:
            out[f"{BUILDING}:{min(members)}"] = frozenset(members)
    return out


def _vector(value, line: int, what: str) -> Vector:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise TraceFormatError(f"{what} must be a 3-vector", line)
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise TraceFormatError(f"{what} must be numeric", line)


def _pairs(value, known, line: int, relation: str) -> FrozenSet[Tuple[str, str]]:
    if not isinstance(value, list):
        raise TraceFormatError(f"'{relation}' must be a list of pairs", line)
    pairs = set()
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise TraceFormatError(f"'{relation}' entries must be pairs", line)
        a, b = str(item[0]), str(item[1])
        for obj in (a, b):
            if obj not in known:
                raise TraceFormatError(f"'{relation}' references undeclared object {obj}", line)
        pairs.add((a, b))
    return frozenset(pairs)


def _parse_header(record, line: int) -> Tuple[str, Dict[str, CatalogEntry]]:
    if not isinstance(record, dict) or "trace" not in record or "objects" not in record:
        raise TraceFormatError("first record must be a header with 'trace' and 'objects'", line)
    catalog: Dict[str, CatalogEntry] = {}
    for item in record["objects"] or []:
        if not isinstance(item, dict) or "id" not in item or "type" not in item:
            raise TraceFormatError("catalog entries need 'id' and 'type'", line)
        obj_id, obj_type = str(item["id"]), str(item["type"])
        if obj_id == AGENT:
            raise TraceFormatError("'agent' is implicit and may not be declared", line)
        if obj_id in catalog:
            raise TraceFormatError(f"duplicate object id {obj_id}", line)
        if obj_type not in vocab.TYPE_PARENTS or vocab.type_class(obj_type) != vocab.OBJ:
            raise TraceFormatError(f"unknown object type {obj_type}", line)
        color = item.get("color") or vocab.color_of_type(obj_type)
        if color is not None and color not in vocab.COLORS:
            raise TraceFormatError(f"unknown color {color}", line)
        catalog[obj_id] = CatalogEntry(obj_id, obj_type, color)
    return str(record["trace"]), catalog


def _object_state(previous: Optional[ObjectState], fields, line: int, obj: str) -> ObjectState:
    if not isinstance(fields, dict):
        raise TraceFormatError(f"fluents of {obj} must be a mapping", line)
    unknown = set(fields) - {"position", "orientation", *_FLUENTS}
    if unknown:
        raise TraceFormatError(f"unknown fluents for {obj}: {', '.join(sorted(unknown))}", line)
    if previous is None:
        if "position" not in fields:
            raise TraceFormatError(f"state 0 must give a position for {obj}", line)
        previous = ObjectState(position=(0.0, 0.0, 0.0))
    updates = {}
    if "position" in fields:
        updates["position"] = _vector(fields["position"], line, f"position of {obj}")
    if "orientation" in fields:
        orientation = fields["orientation"]
        if orientation is not None and orientation not in vocab.ORIENTATIONS:
            raise TraceFormatError(f"unknown orientation {orientation}", line)
        updates["orientation"] = orientation
    for name in _FLUENTS:
        if name in fields:
            updates[name] = bool(fields[name])
    return dataclasses.replace(previous, **updates)


def parse_trace(text: str, source: Optional[Path] = None) -> Trace:
    """Parse trace text.

    Raises:
        TraceFormatError: On malformed records, dangling object references,
            non-increasing state indices or an empty state list
    """
    trace_id = None
    catalog: Dict[str, CatalogEntry] = {}
    raw_states: List[dict] = []

    objects: Dict[str, ObjectState] = {}
    relations = {r: frozenset() for r in _RELATIONS}
    agent_position: Vector = (0.0, 0.0, 0.0)
    crouching = False
    last_index = -1

    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = yaml.safe_load(stripped)
        except yaml.YAMLError as e:
            raise TraceFormatError(f"unreadable record: {e}", line_no)

        if trace_id is None:
            trace_id, catalog = _parse_header(record, line_no)
            continue

        if not isinstance(record, dict) or "state" not in record:
            raise TraceFormatError("state records need a 'state' index", line_no)
        index = record["state"]
        if not isinstance(index, int) or isinstance(index, bool):
            raise TraceFormatError("state index must be an integer", line_no)
        if last_index == -1 and index != 0:
            raise TraceFormatError("the first state must have index 0", line_no)
        if index <= last_index:
            raise TraceFormatError(f"state index {index} does not increase", line_no)

        known = set(catalog) | {AGENT}
        object_fields = record.get("objects") or {}
        if not isinstance(object_fields, dict):
            raise TraceFormatError("'objects' must map ids to fluents", line_no)
        for obj, fields in object_fields.items():
            obj = str(obj)
            if obj not in catalog:
                raise TraceFormatError(f"state references undeclared object {obj}", line_no)
            objects[obj] = _object_state(objects.get(obj), fields, line_no, obj)
        if index == 0:
            missing = sorted(set(catalog) - set(objects))
            if missing:
                raise TraceFormatError(
                    f"state 0 must snapshot every object; missing {', '.join(missing)}", line_no)

        agent = record.get("agent") or {}
        if "position" in agent:
            agent_position = _vector(agent["position"], line_no, "agent position")
        if "crouching" in agent:
            crouching = bool(agent["crouching"])

        for relation in _RELATIONS:
            if relation in record:
                relations[relation] = _pairs(record[relation] or [], known, line_no, relation)

        raw_states.append({
            "index": index,
            "objects": dict(objects),
            "agent_position": agent_position,
            "crouching": crouching,
            "contains": relations["in"],
            "supports": relations["on"],
            "touches": relations["touch"] | {(b, a) for a, b in relations["touch"]},
        })
        last_index = index

    if trace_id is None:
        raise TraceFormatError("missing header record")
    if not raw_states:
        raise TraceFormatError("trace has no states")

    last = len(raw_states) - 1
    states = tuple(
        WorldState(
            is_first_state=(i == 0),
            is_last_state=(i == last),
            catalog=catalog,
            buildings=compute_buildings(raw["supports"], catalog),
            **raw,
        )
        for i, raw in enumerate(raw_states)
    )
    return Trace(trace_id, catalog, states, source)


def load_trace(path: Path) -> Trace:
    """Load and validate one trace file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Trace file does not exist: {path}")
    try:
        trace = parse_trace(path.read_text(encoding="utf-8"), source=path)
    except TraceFormatError as e:
        raise TraceFormatError(f"{path}: {e.message}", e.line) from e
    logger.debug(f"Loaded trace {trace.id} with {len(trace)} states from {path}")
    return trace


def load_traces(path: Path) -> List[Trace]:
    """Load every *.trace file under a directory (or a single file).

    Files that fail to load are logged and skipped; an error is raised only
    when every file fails.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Trace path does not exist: {path}")
    files = sorted(path.rglob(f"*{TRACE_SUFFIX}")) if path.is_dir() else [path]

    traces: List[Trace] = []
    errors = []
    for p in files:
        try:
            traces.append(load_trace(p))
        except TraceFormatError as e:
            logger.error(f"Failed to load {p}: {e}")
            errors.append((p, str(e)))

    if errors and not traces:
        details = "\n".join(f"  - {p}: {e}" for p, e in errors)
        raise TraceFormatError(f"Failed to load all {len(errors)} trace files:\n{details}")
    elif errors:
        logger.warning(f"Loaded {len(traces)} traces, {len(errors)} failed")

    logger.info(f"Loaded {len(traces)} traces from {path}")
    return traces
