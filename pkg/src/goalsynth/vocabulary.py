"""Fixed vocabulary of the game DSL: predicates, functions, types and constants."""

import re
from functools import lru_cache
from typing import Dict, FrozenSet, Optional, Tuple

# Argument slot kinds used in signatures
OBJ = "obj"
COLOR = "color"
ORIENTATION = "orientation"
SIDE = "side"
COLOR_OR_OBJ = "color_or_obj"
TYPE_OR_OBJ = "type_or_obj"

Signature = Tuple[str, ...]

PREDICATES: Dict[str, Tuple[Signature, ...]] = {
    "above": ((OBJ, OBJ),),
    "adjacent": ((OBJ, OBJ),),
    "adjacent_side": ((OBJ, SIDE, OBJ), (OBJ, SIDE, OBJ, SIDE)),
    "agent_crouches": ((),),
    "agent_holds": ((OBJ,),),
    "between": ((OBJ, OBJ, OBJ),),
    "broken": ((OBJ,),),
    "equal_x_position": ((OBJ, OBJ),),
    "equal_z_position": ((OBJ, OBJ),),
    "faces": ((OBJ, OBJ),),
    "game_over": ((),),
    "game_start": ((),),
    "in": ((OBJ, OBJ),),
    "in_motion": ((OBJ,),),
    "is_setup_object": ((OBJ,),),
    "near": ((OBJ, OBJ),),
    "object_orientation": ((OBJ, ORIENTATION),),
    "on": ((OBJ, OBJ),),
    "open": ((OBJ,),),
    "opposite": ((OBJ, OBJ),),
    "rug_color_under": ((OBJ, COLOR),),
    "same_color": ((OBJ, COLOR_OR_OBJ),),
    "same_object": ((OBJ, OBJ),),
    "same_type": ((OBJ, TYPE_OR_OBJ),),
    "toggled_on": ((OBJ,),),
    "touch": ((OBJ, OBJ),),
}

FUNCTIONS: Dict[str, Tuple[Signature, ...]] = {
    "building_size": ((OBJ,),),
    "distance": ((OBJ, OBJ),),
    "distance_side": ((OBJ, SIDE, OBJ), (OBJ, SIDE, OBJ, SIDE)),
    "x_position": ((OBJ,),),
}

# Predicates recorded in the play-trace database
DATABASE_PREDICATES: Tuple[str, ...] = (
    "above", "adjacent", "agent_crouches", "agent_holds", "broken", "game_start",
    "game_over", "in", "in_motion", "object_orientation", "on", "open", "toggled_on", "touch",
)

# Grounded with no semantics; evaluate to false in the interpreter
UNIMPLEMENTED_PREDICATES: FrozenSet[str] = frozenset({
    "between", "faces", "adjacent_side", "opposite", "rug_color_under",
})
UNIMPLEMENTED_FUNCTIONS: FrozenSet[str] = frozenset({"distance_side"})

COLORS: Tuple[str, ...] = (
    "blue", "brown", "gray", "green", "orange", "pink", "purple", "red", "tan", "white", "yellow",
)
ORIENTATIONS: Tuple[str, ...] = ("diagonal", "sideways", "upright", "upside_down")
SIDES: Tuple[str, ...] = ("back", "front", "left", "right")

OBJECT_NAMES: Tuple[str, ...] = (
    "agent", "bed", "desk", "door", "floor", "main_light_switch", "mirror", "room_center", "rug",
    "side_table", "bottom_drawer", "bottom_shelf", "east_sliding_door", "east_wall", "north_wall",
    "south_wall", "top_drawer", "top_shelf", "west_sliding_door", "west_wall",
)

COMPARISON_OPS: Tuple[str, ...] = ("<", "<=", "=", ">", ">=")
MULTI_OPS: Tuple[str, ...] = ("+", "*")
BINARY_OPS: Tuple[str, ...] = ("-", "/")

COUNT_MODES: Tuple[str, ...] = (
    "count", "count-overlapping", "count-once", "count-once-per-objects", "count-measure",
    "count-unique-positions", "count-same-positions", "count-once-per-external-objects",
)

# child -> parent; game_object is the root of all real objects
TYPE_PARENTS: Dict[str, Optional[str]] = {
    "game_object": None,
    "agent": None,
    "building": None,
    "color": None,
    "orientation": None,
    "side": None,
    "block": "game_object",
    "ball": "game_object",
    "ramp": "game_object",
    "drawer": "game_object",
    "shelf": "game_object",
    "sliding_door": "game_object",
    "wall": "game_object",
}

_CATEGORY_MEMBERS: Dict[str, Tuple[str, ...]] = {
    "blocks": (
        "block", "bridge_block", "cube_block", "cylindrical_block", "flat_block", "pyramid_block",
        "tall_cylindrical_block", "tall_rectangular_block", "triangle_block",
    ),
    "balls": ("ball", "beachball", "basketball", "dodgeball", "golfball"),
    "furniture": (
        "bed", "blinds", "desk", "desktop", "main_light_switch", "side_table", "shelf_desk",
    ),
    "large_objects": ("book", "chair", "laptop", "pillow", "teddy_bear"),
    "ramps": ("ramp", "curved_wooden_ramp", "triangular_ramp"),
    "receptacles": ("doggie_bed", "hexagonal_bin", "drawer", "bottom_drawer", "top_drawer"),
    "room_features": (
        "door", "floor", "mirror", "poster", "room_center", "rug", "shelf", "bottom_shelf",
        "top_shelf", "sliding_door", "east_sliding_door", "west_sliding_door", "wall",
        "east_wall", "north_wall", "south_wall", "west_wall",
    ),
    "small_objects": (
        "alarm_clock", "cellphone", "cd", "credit_card", "key_chain", "lamp", "mug", "pen",
        "pencil", "watch",
    ),
}

_COLOR_VARIANTS: Dict[str, Tuple[str, ...]] = {
    "bridge_block": ("green", "pink", "tan"),
    "cube_block": ("blue", "tan", "yellow"),
    "cylindrical_block": ("blue", "green", "tan"),
    "flat_block": ("gray", "tan", "yellow"),
    "pyramid_block": ("blue", "red", "yellow"),
    "tall_cylindrical_block": ("green", "tan", "yellow"),
    "tall_rectangular_block": ("blue", "green", "tan"),
    "triangle_block": ("blue", "green", "tan"),
    "dodgeball": ("blue", "red", "pink"),
    "golfball": ("green", "white"),
    "triangular_ramp": ("green", "tan"),
}

_EXPLICIT_PARENTS: Dict[str, str] = {
    "bottom_drawer": "drawer",
    "top_drawer": "drawer",
    "bottom_shelf": "shelf",
    "top_shelf": "shelf",
    "east_sliding_door": "sliding_door",
    "west_sliding_door": "sliding_door",
    "east_wall": "wall",
    "north_wall": "wall",
    "south_wall": "wall",
    "west_wall": "wall",
}

for _category, _members in _CATEGORY_MEMBERS.items():
    for _member in _members:
        if _member in TYPE_PARENTS:
            continue
        if _member in _EXPLICIT_PARENTS:
            TYPE_PARENTS[_member] = _EXPLICIT_PARENTS[_member]
        elif _category == "blocks":
            TYPE_PARENTS[_member] = "block"
        elif _category == "balls":
            TYPE_PARENTS[_member] = "ball"
        elif _category == "ramps":
            TYPE_PARENTS[_member] = "ramp"
        else:
            TYPE_PARENTS[_member] = "game_object"

for _base, _colors in _COLOR_VARIANTS.items():
    for _color in _colors:
        TYPE_PARENTS[f"{_base}_{_color}"] = _base

OBJECT_TYPES: Tuple[str, ...] = tuple(
    t for t in TYPE_PARENTS if t not in ("color", "orientation", "side")
)

TYPE_CATEGORIES: Dict[str, str] = {"game_object": "any_object", "agent": "agent",
                                   "building": "building"}
for _category, _members in _CATEGORY_MEMBERS.items():
    for _member in _members:
        TYPE_CATEGORIES[_member] = _category
for _base, _colors in _COLOR_VARIANTS.items():
    for _color in _colors:
        TYPE_CATEGORIES[f"{_base}_{_color}"] = TYPE_CATEGORIES[_base]

OBJECT_VARIABLE_RE = re.compile(r"^\?[a-w][a-z0-9]*$")
COLOR_VARIABLE_RE = re.compile(r"^\?x[0-9]*$")
ORIENTATION_VARIABLE_RE = re.compile(r"^\?y[0-9]*$")
SIDE_VARIABLE_RE = re.compile(r"^\?z[0-9]*$")


def variable_class(name: str) -> Optional[str]:
    """Classify a variable name as obj/color/orientation/side, or None if not a variable."""
    if COLOR_VARIABLE_RE.match(name):
        return COLOR
    if ORIENTATION_VARIABLE_RE.match(name):
        return ORIENTATION
    if SIDE_VARIABLE_RE.match(name):
        return SIDE
    if OBJECT_VARIABLE_RE.match(name):
        return OBJ
    return None


def type_class(type_name: str) -> Optional[str]:
    """Which variable class a type name may be bound to."""
    if type_name == "color" or type_name in COLORS:
        return COLOR
    if type_name == "orientation" or type_name in ORIENTATIONS:
        return ORIENTATION
    if type_name == "side" or type_name in SIDES:
        return SIDE
    if type_name in TYPE_PARENTS:
        return OBJ
    return None


@lru_cache(maxsize=None)
def type_ancestors(type_name: str) -> Tuple[str, ...]:
    """The type itself followed by its ancestors, nearest first."""
    chain = []
    current: Optional[str] = type_name
    while current is not None:
        chain.append(current)
        current = TYPE_PARENTS.get(current)
    return tuple(chain)


def is_subtype(type_name: str, ancestor: str) -> bool:
    return ancestor in type_ancestors(type_name)


def category_of(type_name: str) -> str:
    """Coarse object category of a type (balls, blocks, ...); colors etc. map to themselves."""
    if type_name in TYPE_CATEGORIES:
        return TYPE_CATEGORIES[type_name]
    cls = type_class(type_name)
    if cls in (COLOR, ORIENTATION, SIDE):
        return f"{cls}s"
    return "unknown"


def color_of_type(type_name: str) -> Optional[str]:
    """Color implied by a colored type variant such as cube_block_blue."""
    for color in COLORS:
        if type_name.endswith(f"_{color}"):
            return color
    return None


def signature_arities(name: str, table: Dict[str, Tuple[Signature, ...]]) -> Tuple[int, ...]:
    return tuple(len(sig) for sig in table[name])


def is_constant(token: str) -> bool:
    """True for any non-variable term the grammar allows as a predicate argument."""
    return (token in OBJECT_NAMES or token in TYPE_PARENTS or token in COLORS
            or token in ORIENTATIONS or token in SIDES)
