"""Line-oriented scenario files.

Each non-blank line is ``section.key = value``; ``#`` starts a comment.
``include = other.cfg`` splices another file in place (paths relative to the
including file); later assignments override earlier ones.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigSyntaxError(ValueError):
    pass


@dataclass
class ConfigEntry:
    value: str
    source: str
    line: int

    def where(self) -> str:
        return f"{self.source}:{self.line}"


@dataclass
class RawConfig:
    entries: dict[str, ConfigEntry] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str, default: str | None = None) -> str | None:
        e = self.entries.get(key)
        return e.value if e is not None else default

    def section(self, name: str) -> dict[str, ConfigEntry]:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.entries.items() if k.startswith(pre)}

    def where(self, key: str) -> str:
        e = self.entries.get(key)
        return e.where() if e else "<default>"

    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def parse_config(text: str, source: str = "<config>", base_dir: Path | str = ".",
                 _stack: tuple[Path, ...] = ()) -> RawConfig:
    cfg = RawConfig(base_dir=Path(base_dir))
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigSyntaxError(f"{source}:{lineno}: expected 'section.key = value'")
        if key == "include":
            path = cfg.resolve_path(value).resolve()
            if path in _stack:
                raise ConfigSyntaxError(f"{source}:{lineno}: include cycle through {path}")
            try:
                sub_text = path.read_text()
            except OSError as exc:
                raise ConfigSyntaxError(f"{source}:{lineno}: cannot include {value!r}: {exc}") from None
            sub = parse_config(sub_text, str(path), path.parent, _stack + (path,))
            cfg.entries.update(sub.entries)
            continue
        if "." not in key and key != "seed":
            raise ConfigSyntaxError(f"{source}:{lineno}: key {key!r} lacks a section")
        cfg.entries[key] = ConfigEntry(value, source, lineno)
    return cfg


def load_config(path: Path | str) -> RawConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path), path.parent, (path.resolve(),))


# -- expressions ------------------------------------------------------------

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where, "heaviside": np.heaviside,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide,
           ast.Pow: np.power, ast.Mod: np.mod}
_CMPOPS = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater, ast.GtE: np.greater_equal,
           ast.Eq: np.equal, ast.NotEq: np.not_equal}


class Expression:
    """Arithmetic in a fixed set of variables, evaluated elementwise on arrays.

    Only numbers, the listed variables, ``pi``/``e``, arithmetic, comparisons
    and a small set of numpy functions are accepted.
    """

    def __init__(self, text: str, variables: tuple[str, ...] = ("x", "y")):
        self.text = text
        self.variables = variables
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ConfigSyntaxError(f"invalid expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self.tree = tree.body
        self.constant = not any(isinstance(n, ast.Name) and n.id in variables for n in ast.walk(tree))

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigSyntaxError(f"only numeric literals are allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTS:
                raise ConfigSyntaxError(f"unknown name {node.id!r} in {self.text!r} "
                                        f"(variables: {', '.join(self.variables)})")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigSyntaxError(f"operator not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ConfigSyntaxError(f"operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Compare):
            if any(type(op) not in _CMPOPS for op in node.ops):
                raise ConfigSyntaxError(f"comparison not allowed in {self.text!r}")
            self._check(node.left)
            for c in node.comparators:
                self._check(c)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigSyntaxError(f"call not allowed in {self.text!r}")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigSyntaxError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, env)
            out = True
            for op, c in zip(node.ops, node.comparators):
                right = self._eval(c, env)
                out = np.logical_and(out, _CMPOPS[type(op)](left, right))
                left = right
            return out.astype(float)
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, *args):
        env = dict(zip(self.variables, (np.asarray(a, dtype=float) for a in args)))
        shape = np.broadcast_shapes(*(np.shape(a) for a in env.values())) if env else ()
        with np.errstate(all="ignore"):
            val = self._eval(self.tree, env)
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigSyntaxError(f"expected a boolean, got {text!r}")


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigSyntaxError(f"expected numbers, got {text!r}") from None
