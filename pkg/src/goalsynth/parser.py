"""Parser for game programs written in the game DSL."""

import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from . import vocabulary as vocab
from .exceptions import ArityError, GameParseError, UnknownNameError, ValidationError
from .logger import get_logger
from .syntax import (
    And, AtEnd, BinaryOp, Exists, ExternalMaximize, ExternalMinimize, Forall, FunctionComparison,
    FunctionEval, Game, GameConserved, GameOptional, Hold, HoldWhile, MultiOp, Negate, Node, Not,
    NumberLiteral, Once, OnceMeasure, Or, PrefForall, Preference, PreferenceEval, Predicate,
    ScoringComparison, SetupAnd, SetupExists, SetupForall, SetupNot, SetupOr, TerminalAnd,
    TerminalComparison, TerminalNot, TerminalOr, Term, Then, TotalScore, TotalTime, VariableDef,
    VariableList, renumber,
)

logger = get_logger(__name__)

NUMBER_RE = re.compile(r"^-?\d*\.?\d+$")
GAME_SUFFIXES = (".pddl", ".dsl")


class Atom(str):
    """A token that remembers its character offset."""
    pos: int

    def __new__(cls, value: str, pos: int):
        obj = super().__new__(cls, value)
        obj.pos = pos
        return obj


class SList(list):
    """A parenthesized list that remembers the offset of its opening paren."""

    def __init__(self, pos: int):
        super().__init__()
        self.pos = pos


SExpr = Union[Atom, SList]


def tokenize(text: str) -> List[SExpr]:
    """Split DSL source into nested lists; `;` starts a comment running to end of line.

    Raises:
        GameParseError: On unbalanced parentheses
    """
    stack: List[SList] = [SList(0)]
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch == "(":
            stack.append(SList(i))
            i += 1
        elif ch == ")":
            if len(stack) == 1:
                raise GameParseError("unexpected ')'", position=i)
            done = stack.pop()
            stack[-1].append(done)
            i += 1
        else:
            start = i
            while i < n and not text[i].isspace() and text[i] not in "();":
                i += 1
            stack[-1].append(Atom(text[start:i], start))
    if len(stack) > 1:
        raise GameParseError("unbalanced '(': missing ')'", position=stack[-1].pos,
                             expected=[")"])
    return stack[0]


def _pos(x: SExpr) -> int:
    return getattr(x, "pos", 0)


def _head(x: SExpr) -> Optional[str]:
    if isinstance(x, SList) and x and isinstance(x[0], Atom):
        return x[0].lower()
    return None


def _expect_list(x: SExpr, what: str, expected: Sequence[str] = ()) -> SList:
    if not isinstance(x, SList):
        raise GameParseError(f"expected {what}, got '{x}'", position=_pos(x), expected=expected)
    if not x:
        raise GameParseError(f"expected {what}, got '()'", position=_pos(x), expected=expected)
    return x


def _expect_atom(x: SExpr, what: str) -> Atom:
    if not isinstance(x, Atom):
        raise GameParseError(f"expected {what}, got a list", position=_pos(x))
    return x


def _expect_count(x: SList, minimum: int, maximum: Optional[int], what: str):
    count = len(x) - 1
    if count < minimum or (maximum is not None and count > maximum):
        if maximum == minimum:
            wanted = f"{minimum}"
        elif maximum is None:
            wanted = f"at least {minimum}"
        else:
            wanted = f"{minimum}-{maximum}"
        raise GameParseError(f"'{what}' takes {wanted} argument(s), got {count}", position=x.pos)


# --- variables -------------------------------------------------------------

def parse_variable_list(x: SExpr) -> VariableList:
    """Parse `(?a ?b - ball ?c - (either cube_block flat_block))`."""
    items = _expect_list(x, "variable list", ["(?a - type)"])
    defs: List[VariableDef] = []
    pending: List[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, Atom) and tok == "-":
            if not pending:
                raise GameParseError("type given without variables", position=tok.pos)
            if i + 1 >= len(items):
                raise GameParseError("missing type after '-'", position=tok.pos, expected=["type"])
            defs.append(_variable_def(pending, items[i + 1]))
            pending = []
            i += 2
            continue
        name = _expect_atom(tok, "variable")
        if vocab.variable_class(name) is None:
            raise GameParseError(f"invalid variable name '{name}'", position=name.pos,
                                 expected=["?a-?w", "?x", "?y", "?z"])
        pending.append(name)
        i += 1
    if pending:
        raise GameParseError(f"variables {' '.join(pending)} have no type",
                             position=items.pos, expected=["- type"])
    seen = set()
    for d in defs:
        for name in d.names:
            if name in seen:
                raise GameParseError(f"variable {name} declared twice in one quantifier",
                                     position=items.pos)
            seen.add(name)
    return VariableList(tuple(defs))


def _variable_def(names: List[Atom], type_expr: SExpr) -> VariableDef:
    either = False
    if isinstance(type_expr, SList):
        if _head(type_expr) != "either" or len(type_expr) < 2:
            raise GameParseError("expected type name or (either ...)", position=type_expr.pos,
                                 expected=["(either t1 t2)"])
        types = [_expect_atom(t, "type name") for t in type_expr[1:]]
        either = True
        where = type_expr.pos
    else:
        types = [type_expr]
        where = type_expr.pos
    for t in types:
        if vocab.type_class(t) is None:
            raise UnknownNameError(f"unknown type '{t}'", position=t.pos)
    for name in names:
        cls = vocab.variable_class(name)
        for t in types:
            if vocab.type_class(t) != cls:
                raise GameParseError(
                    f"variable {name} is a {cls} variable but '{t}' is a "
                    f"{vocab.type_class(t)} type",
                    position=where,
                )
    return VariableDef(tuple(str(n) for n in names), tuple(str(t) for t in types), either)


# --- terms, predicates, functions -------------------------------------------

def _term_fits(value: str, kind: str, typed_slots: bool) -> bool:
    cls = vocab.variable_class(value)
    if kind == vocab.OBJ:
        if cls == vocab.OBJ or value in vocab.OBJECT_NAMES:
            return True
        return typed_slots and vocab.type_class(value) == vocab.OBJ
    if kind == vocab.COLOR:
        return cls == vocab.COLOR or value in vocab.COLORS
    if kind == vocab.ORIENTATION:
        return cls == vocab.ORIENTATION or value in vocab.ORIENTATIONS
    if kind == vocab.SIDE:
        return cls == vocab.SIDE or value in vocab.SIDES
    if kind == vocab.COLOR_OR_OBJ:
        return _term_fits(value, vocab.OBJ, typed_slots) or _term_fits(value, vocab.COLOR, False)
    if kind == vocab.TYPE_OR_OBJ:
        return _term_fits(value, vocab.OBJ, typed_slots) or vocab.type_class(value) == vocab.OBJ
    return False


def _parse_call(x: SList, table, kind_label: str,
                typed_slots: bool) -> Tuple[str, Tuple[Term, ...]]:
    name = _expect_atom(x[0], f"{kind_label} name")
    if name not in table:
        raise UnknownNameError(f"unknown {kind_label} '{name}'", position=name.pos)
    args = [_expect_atom(a, "term") for a in x[1:]]
    signatures = [sig for sig in table[name] if len(sig) == len(args)]
    if not signatures:
        arities = "/".join(str(a) for a in vocab.signature_arities(name, table))
        raise ArityError(f"{kind_label} '{name}' takes {arities} argument(s), got {len(args)}",
                         position=x.pos)
    for sig in signatures:
        if all(_term_fits(a, k, typed_slots) for a, k in zip(args, sig)):
            return str(name), tuple(Term(str(a)) for a in args)
    bad = next(a for a, k in zip(args, signatures[0]) if not _term_fits(a, k, typed_slots))
    raise UnknownNameError(f"'{bad}' is not a valid argument for {kind_label} '{name}'",
                           position=bad.pos)


def parse_function_eval(x: SExpr, typed_slots: bool = False) -> FunctionEval:
    items = _expect_list(x, "function evaluation", list(vocab.FUNCTIONS))
    name, args = _parse_call(items, vocab.FUNCTIONS, "function", typed_slots)
    return FunctionEval(name, args)


def parse_super_predicate(x: SExpr, typed_slots: bool = False) -> Node:
    """Parse a super-predicate.

    Args:
        x: Tokenized expression
        typed_slots: Allow type names in object slots (predicate-database queries)
    """
    items = _expect_list(x, "predicate expression",
                         ["and", "or", "not", "exists", "forall", "<predicate>", "<comparison>"])
    head = _head(items)
    if head in ("and", "or"):
        _expect_count(items, 1, None, head)
        kids = tuple(parse_super_predicate(c, typed_slots) for c in items[1:])
        return And(kids) if head == "and" else Or(kids)
    if head == "not":
        _expect_count(items, 1, 1, head)
        return Not(parse_super_predicate(items[1], typed_slots))
    if head in ("exists", "forall"):
        _expect_count(items, 2, 2, head)
        variables = parse_variable_list(items[1])
        child = parse_super_predicate(items[2], typed_slots)
        return Exists(variables, child) if head == "exists" else Forall(variables, child)
    if head in vocab.COMPARISON_OPS:
        _expect_count(items, 2, None if head == "=" else 2, head)
        args = []
        for a in items[1:]:
            if isinstance(a, Atom):
                if not NUMBER_RE.match(a):
                    raise GameParseError(f"expected number or function, got '{a}'",
                                         position=a.pos, expected=["<number>", "(<function> ...)"])
                args.append(NumberLiteral(str(a)))
            else:
                args.append(parse_function_eval(a, typed_slots))
        return FunctionComparison(str(head), tuple(args))
    if head is None:
        raise GameParseError("expected predicate name", position=items.pos)
    name, args = _parse_call(items, vocab.PREDICATES, "predicate", typed_slots)
    return Predicate(name, args)


def parse_predicate_expression(text: str, typed_slots: bool = True) -> Node:
    """Parse a standalone super-predicate, e.g. a predicate-database query."""
    exprs = tokenize(text)
    if len(exprs) != 1:
        raise GameParseError("expected exactly one expression", position=0)
    return renumber(parse_super_predicate(exprs[0], typed_slots))


# --- setup -----------------------------------------------------------------

def parse_setup(x: SExpr) -> Node:
    items = _expect_list(x, "setup", ["and", "or", "not", "exists", "forall",
                                      "game-conserved", "game-optional"])
    head = _head(items)
    if head in ("and", "or"):
        _expect_count(items, 1, None, head)
        kids = tuple(parse_setup(c) for c in items[1:])
        return SetupAnd(kids) if head == "and" else SetupOr(kids)
    if head == "not":
        _expect_count(items, 1, 1, head)
        return SetupNot(parse_setup(items[1]))
    if head in ("exists", "forall"):
        _expect_count(items, 2, 2, head)
        variables = parse_variable_list(items[1])
        child = parse_setup(items[2])
        return SetupExists(variables, child) if head == "exists" else SetupForall(variables, child)
    if head in ("game-conserved", "game-optional"):
        _expect_count(items, 1, 1, head)
        child = parse_super_predicate(items[1])
        return GameConserved(child) if head == "game-conserved" else GameOptional(child)
    raise GameParseError(f"unexpected '{head}' in setup", position=items.pos,
                         expected=["and", "or", "not", "exists", "forall", "game-conserved",
                                   "game-optional"])


# --- preferences -----------------------------------------------------------

def parse_seq_func(x: SExpr) -> Node:
    items = _expect_list(x, "sequence function", ["once", "once-measure", "hold", "hold-while"])
    head = _head(items)
    if head == "once":
        _expect_count(items, 1, 2, head)
        child = parse_super_predicate(items[1])
        if len(items) == 3:
            return OnceMeasure(child, parse_function_eval(items[2]))
        return Once(child)
    if head == "once-measure":
        _expect_count(items, 2, 2, head)
        return OnceMeasure(parse_super_predicate(items[1]), parse_function_eval(items[2]))
    if head == "hold":
        _expect_count(items, 1, 1, head)
        return Hold(parse_super_predicate(items[1]))
    if head == "hold-while":
        _expect_count(items, 2, None, head)
        return HoldWhile(parse_super_predicate(items[1]),
                         tuple(parse_super_predicate(c) for c in items[2:]))
    raise GameParseError(f"unexpected '{head}' in then", position=items.pos,
                         expected=["once", "once-measure", "hold", "hold-while"])


def parse_preference_body(x: SExpr) -> Node:
    items = _expect_list(x, "preference body", ["then", "at-end"])
    head = _head(items)
    if head == "then":
        if len(items) < 3:
            raise GameParseError("'then' needs at least two sequence functions",
                                 position=items.pos, expected=["once", "hold", "hold-while"])
        return Then(tuple(parse_seq_func(c) for c in items[1:]))
    if head == "at-end":
        _expect_count(items, 1, 1, head)
        return AtEnd(parse_super_predicate(items[1]))
    raise GameParseError(f"unexpected '{head}' as preference body", position=items.pos,
                         expected=["then", "at-end"])


def parse_preference(x: SExpr) -> Preference:
    items = _expect_list(x, "preference", ["preference"])
    if _head(items) != "preference":
        raise GameParseError("expected (preference <name> ...)", position=items.pos,
                             expected=["preference"])
    _expect_count(items, 2, 2, "preference")
    name = _expect_atom(items[1], "preference name")
    quant = items[2]
    head = _head(quant)
    if head in ("exists", "forall"):
        _expect_count(quant, 2, 2, head)
        return Preference(str(name), head, parse_variable_list(quant[1]),
                          parse_preference_body(quant[2]))
    return Preference(str(name), None, None, parse_preference_body(quant))


def parse_pref_def(x: SExpr) -> Node:
    items = _expect_list(x, "preference definition", ["preference", "forall"])
    if _head(items) == "forall":
        _expect_count(items, 2, 2, "forall")
        return PrefForall(parse_variable_list(items[1]), parse_preference(items[2]))
    return parse_preference(items)


def parse_constraints(x: SExpr) -> Tuple[Node, ...]:
    items = _expect_list(x, "constraints", ["and", "preference", "forall"])
    if _head(items) == "and":
        if len(items) < 2:
            raise GameParseError("constraints need at least one preference", position=items.pos,
                                 expected=["preference"])
        return tuple(parse_pref_def(c) for c in items[1:])
    return (parse_pref_def(items),)


# --- terminal and scoring --------------------------------------------------

def _number(x: SExpr) -> NumberLiteral:
    if not isinstance(x, Atom) or not NUMBER_RE.match(x):
        raise GameParseError(f"expected number, got '{x}'", position=_pos(x), expected=["<number>"])
    return NumberLiteral(str(x))


def parse_terminal(x: SExpr) -> Node:
    items = _expect_list(x, "terminal condition", ["and", "or", "not", "<comparison>"])
    head = _head(items)
    if head in ("and", "or"):
        _expect_count(items, 1, None, head)
        kids = tuple(parse_terminal(c) for c in items[1:])
        return TerminalAnd(kids) if head == "and" else TerminalOr(kids)
    if head == "not":
        _expect_count(items, 1, 1, head)
        return TerminalNot(parse_terminal(items[1]))
    if head in vocab.COMPARISON_OPS:
        _expect_count(items, 2, 2, head)
        return TerminalComparison(str(head), parse_scoring_expr(items[1]), _number(items[2]))
    raise GameParseError(f"unexpected '{head}' in terminal", position=items.pos,
                         expected=["and", "or", "not", "<", "<=", "=", ">", ">="])


def parse_pref_name_and_types(x: SExpr) -> Tuple[str, Tuple[str, ...]]:
    token = _expect_atom(x, "preference name")
    name, *qualifiers = token.split(":")
    for q in qualifiers:
        if vocab.type_class(q) is None and q not in vocab.OBJECT_NAMES:
            raise UnknownNameError(f"unknown type '{q}' in preference reference",
                                   position=token.pos)
    return name, tuple(qualifiers)


def parse_scoring_expr(x: SExpr) -> Node:
    if isinstance(x, Atom):
        return _number(x)
    items = _expect_list(x, "scoring expression")
    head = _head(items)
    if head in vocab.MULTI_OPS:
        _expect_count(items, 1, None, head)
        return MultiOp(str(head), tuple(parse_scoring_expr(c) for c in items[1:]))
    if head == "-":
        _expect_count(items, 1, 2, head)
        if len(items) == 2:
            return Negate(parse_scoring_expr(items[1]))
        return BinaryOp("-", parse_scoring_expr(items[1]), parse_scoring_expr(items[2]))
    if head == "/":
        _expect_count(items, 2, 2, head)
        return BinaryOp("/", parse_scoring_expr(items[1]), parse_scoring_expr(items[2]))
    if head == "total-time":
        _expect_count(items, 0, 0, head)
        return TotalTime()
    if head == "total-score":
        _expect_count(items, 0, 0, head)
        return TotalScore()
    if head in vocab.COMPARISON_OPS:
        _expect_count(items, 2, None if head == "=" else 2, head)
        return ScoringComparison(str(head), tuple(parse_scoring_expr(c) for c in items[1:]))
    if head in vocab.COUNT_MODES:
        _expect_count(items, 1, 1, head)
        name, qualifiers = parse_pref_name_and_types(items[1])
        return PreferenceEval(str(head), name, qualifiers)
    if head == "external-forall-maximize":
        _expect_count(items, 1, 1, head)
        return ExternalMaximize(parse_scoring_expr(items[1]))
    if head == "external-forall-minimize":
        _expect_count(items, 1, 1, head)
        return ExternalMinimize(parse_scoring_expr(items[1]))
    raise GameParseError(
        f"unexpected '{head}' in scoring", position=items.pos,
        expected=list(vocab.MULTI_OPS + vocab.BINARY_OPS + vocab.COUNT_MODES)
        + ["total-time", "total-score", "external-forall-maximize", "external-forall-minimize"],
    )


# --- games -----------------------------------------------------------------

SECTION_KEYS = (":domain", ":setup", ":constraints", ":terminal", ":scoring")


def _build_game(x: SExpr) -> Game:
    items = _expect_list(x, "game definition", ["define"])
    if _head(items) != "define":
        raise GameParseError("expected (define (game <id>) ...)", position=items.pos,
                             expected=["define"])
    if len(items) < 2 or _head(items[1]) != "game" or len(items[1]) != 2:
        raise GameParseError("expected (game <id>)", position=_pos(items[1]) if len(items) > 1
                             else items.pos, expected=["(game <id>)"])
    name = _expect_atom(items[1][1], "game id")

    sections = {}
    for section in items[2:]:
        sec = _expect_list(section, "game section", list(SECTION_KEYS))
        key = _head(sec)
        if key not in SECTION_KEYS:
            raise GameParseError(f"unknown section '{key}'", position=sec.pos,
                                 expected=list(SECTION_KEYS))
        if key in sections:
            raise GameParseError(f"duplicate section '{key}'", position=sec.pos)
        sections[key] = sec

    for required in (":domain", ":constraints", ":scoring"):
        if required not in sections:
            raise GameParseError(f"missing {required} section", position=items.pos,
                                 expected=[required])

    domain_sec = sections[":domain"]
    _expect_count(domain_sec, 1, 1, ":domain")
    domain = _expect_atom(domain_sec[1], "domain id")

    setup = None
    if ":setup" in sections:
        _expect_count(sections[":setup"], 1, 1, ":setup")
        setup = parse_setup(sections[":setup"][1])

    _expect_count(sections[":constraints"], 1, 1, ":constraints")
    preferences = parse_constraints(sections[":constraints"][1])

    terminal = None
    if ":terminal" in sections:
        _expect_count(sections[":terminal"], 1, 1, ":terminal")
        terminal = parse_terminal(sections[":terminal"][1])

    scoring_sec = sections[":scoring"]
    body = list(scoring_sec[1:])
    if body and isinstance(body[0], Atom) and body[0].lower() == "maximize":
        body = body[1:]
    if len(body) != 1:
        raise GameParseError("':scoring' takes one expression", position=scoring_sec.pos)
    scoring = parse_scoring_expr(body[0])

    return Game(str(name), str(domain), setup, preferences, terminal, scoring)


def parse_game(text: str) -> Game:
    """Parse a single game program.

    Args:
        text: DSL source holding exactly one `(define (game ...))`

    Returns:
        Game with pre-order node ids

    Raises:
        GameParseError: Syntax error (with position and expected tokens)
        ArityError: Predicate/function arity mismatch
        UnknownNameError: Unknown predicate, function or type
    """
    exprs = tokenize(text)
    if len(exprs) != 1:
        raise GameParseError(f"expected exactly one game, found {len(exprs)} expressions",
                             position=_pos(exprs[1]) if len(exprs) > 1 else 0)
    return renumber(_build_game(exprs[0]))


def parse_games(text: str) -> List[Game]:
    """Parse every game in a document holding several definitions."""
    return [renumber(_build_game(x)) for x in tokenize(text)]


def _game_files(path: Path) -> List[Path]:
    if not path.exists():
        raise ValidationError(f"No game corpus at {path}")
    if path.is_dir():
        files = sorted(p for p in path.rglob("*") if p.suffix.lower() in GAME_SUFFIXES)
        if not files:
            raise ValidationError(f"No .pddl or .dsl files under {path}")
        return files
    if path.suffix.lower() not in GAME_SUFFIXES:
        raise ValidationError(f"Expected a .pddl/.dsl file or a directory, got {path}")
    return [path]


def load_games(path: Path) -> List[Tuple[Path, Game]]:
    """Load every game in a file, or in all game files under a directory.

    Files that fail to parse are logged and skipped.

    Returns:
        (file, game) pairs in sorted file order

    Raises:
        ValidationError: If the path is missing or holds no game files
        GameParseError: If no file parses
    """
    files = _game_files(Path(path))
    logger.debug(f"Reading {len(files)} game files from {path}")

    out: List[Tuple[Path, Game]] = []
    failed = 0
    for p in files:
        try:
            out.extend((p, game) for game in parse_games(p.read_text(encoding="utf-8")))
        except GameParseError as e:
            logger.error(f"Skipping {p}: {e}")
            failed += 1

    if failed == len(files):
        raise GameParseError(f"None of the {failed} game files under {path} parse")
    if failed:
        logger.warning(f"{failed} of {len(files)} game files failed to parse")
    logger.info(f"Loaded {len(out)} games from {len(files) - failed} files")
    return out
