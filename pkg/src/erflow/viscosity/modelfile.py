"""Line-oriented model definition files.

Example::

    variant = REGULARIZED_BINGHAM
    lambda = 1e-3
    bounds.a5 = 1
    mu.alpha = 1e-3
    yield = constant 1
    term.1.coefficient = saturating c0=1 c1=2 k=0.5 E0=1
    term.1.shear = flowcurve gamma=0,1,2 tau=0,1,1.5

For Bingham variants the ``term.N`` lines describe the smooth part; for
GIVEN_MU they describe psi1 and ``given_mu`` is a constant in [0, 1].
"""

from __future__ import annotations

import re
from pathlib import Path

from .models import (Bounds, ConstantField, ConstantShear, CrossShear, ExtendedBingham,
                     FlowCurveShear, GivenMu, ModelError, RegularizedBingham, RegularModel,
                     SaturatingField, SingularBingham, SplineField, Variant)
from .mu import Mollifier, MuFunction


class ModelFileError(ValueError):
    pass


_BOUND_KEYS = {f"bounds.a{i}" for i in range(1, 8)}
_MU_KEYS = {"mu.alpha", "mu.frame_velocity", "mu.radius", "mu.beta", "mu.e_threshold"}
_SCALAR_KEYS = {"variant", "lambda", "yield", "plastic", "given_mu"}
_TERM = re.compile(r"term\.(\d+)\.(coefficient|shear)$")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _kv(parts: list[str]) -> dict:
    out = {}
    for p in parts:
        k, sep, v = p.partition("=")
        if not sep:
            raise ModelFileError(f"expected key=value, got {p!r}")
        out[k] = v
    return out


def parse_shear(text: str):
    head, *rest = text.split()
    kv = _kv(rest) if head != "constant" else {}
    if head == "constant":
        return ConstantShear(float(rest[0]))
    if head == "cross":
        return CrossShear(float(kv["beta0"]), float(kv["beta_inf"]), float(kv.get("scale", 1.0)))
    if head == "flowcurve":
        slopes = _floats(kv["slopes"]) if "slopes" in kv else None
        return FlowCurveShear(_floats(kv["gamma"]), _floats(kv["tau"]), slopes)
    raise ModelFileError(f"unknown shear function {head!r}")


def parse_field(text: str):
    head, *rest = text.split()
    if head == "constant":
        return ConstantField(float(rest[0]))
    kv = _kv(rest)
    if head == "saturating":
        return SaturatingField(float(kv["c0"]), float(kv["c1"]), float(kv.get("k", 0.0)), float(kv.get("E0", 1.0)))
    if head == "spline":
        return SplineField(_floats(kv["E"]), _floats(kv["values"]), float(kv.get("k", 0.0)))
    raise ModelFileError(f"unknown coefficient function {head!r}")


def parse_model(text: str):
    """Returns (model, MuFunction)."""
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFileError(f"line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if not (key in _SCALAR_KEYS or key in _BOUND_KEYS or key in _MU_KEYS or _TERM.match(key)):
            raise ModelFileError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ModelFileError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)

    def get(key, default=None):
        return entries[key][0] if key in entries else default

    def wrap(key, fn, *args):
        try:
            return fn(*args)
        except (ModelError, ModelFileError, KeyError, ValueError, IndexError) as exc:
            line = entries[key][1] if key in entries else 0
            raise ModelFileError(f"line {line}: invalid {key}: {exc}") from None

    if "variant" not in entries:
        raise ModelFileError("missing 'variant'")
    try:
        variant = Variant(get("variant").upper())
    except ValueError:
        raise ModelFileError(f"line {entries['variant'][1]}: unknown variant {get('variant')!r}") from None
    bounds = Bounds(**{k.split(".")[1]: wrap(k, float, get(k)) for k in _BOUND_KEYS if k in entries})

    terms = {}
    for key in entries:
        m = _TERM.match(key)
        if m:
            terms.setdefault(int(m.group(1)), {})[m.group(2)] = key
    pairs = []
    for n in sorted(terms):
        t = terms[n]
        if set(t) != {"coefficient", "shear"}:
            raise ModelFileError(f"term {n} needs both coefficient and shear")
        pairs.append((wrap(t["coefficient"], parse_field, get(t["coefficient"])),
                      wrap(t["shear"], parse_shear, get(t["shear"]))))
    lam = wrap("lambda", float, get("lambda", "0"))

    def smooth():
        if not pairs:
            raise ModelFileError(f"{variant.value} model needs at least one term")
        return RegularModel(tuple(pairs))

    def need(key):
        if key not in entries:
            raise ModelFileError(f"{variant.value} model needs '{key}'")
        return wrap(key, parse_field, get(key))

    try:
        if variant is Variant.REGULAR:
            model = RegularModel(tuple(pairs), bounds) if pairs else smooth()
        elif variant is Variant.REGULARIZED_BINGHAM:
            model = RegularizedBingham(need("yield"), smooth(), lam, bounds)
        elif variant is Variant.SINGULAR_BINGHAM:
            model = SingularBingham(need("yield"), smooth(), bounds)
        elif variant is Variant.EXTENDED_BINGHAM:
            model = ExtendedBingham(need("yield"), need("plastic"), lam, bounds)
        else:
            g = wrap("given_mu", float, get("given_mu", "0"))
            if not 0.0 <= g <= 1.0:
                raise ModelFileError(f"line {entries['given_mu'][1]}: given_mu must lie in [0, 1]")
            model = GivenMu(need("yield"), smooth(), g, lam, bounds)
    except ModelError as exc:
        raise ModelFileError(str(exc)) from None

    mol = None
    if "mu.radius" in entries:
        mol = wrap("mu.radius", lambda: Mollifier(float(get("mu.radius"))))
    fv = wrap("mu.frame_velocity", _floats, get("mu.frame_velocity", "0,0"))
    if len(fv) != 2:
        raise ModelFileError("mu.frame_velocity needs two components")
    mu_fn = wrap("mu.alpha", lambda: MuFunction(
        alpha=float(get("mu.alpha", "1e-3")), frame_velocity=tuple(fv), mollifier=mol,
        beta=float(get("mu.beta", "0")), e_threshold=float(get("mu.e_threshold", "1e-12"))))
    return model, mu_fn


def load_model(path) -> tuple:
    return parse_model(Path(path).read_text())


def format_model(model, mu_fn: MuFunction | None = None) -> str:
    """Inverse of ``parse_model`` for models built from the file vocabulary."""
    lines = [f"variant = {model.variant.value}"]
    if model.variant is not Variant.REGULAR and model.variant is not Variant.SINGULAR_BINGHAM:
        lines.append(f"lambda = {model.lam!r}")
    b = model.bounds
    for i in range(1, 8):
        v = getattr(b, f"a{i}")
        if v is not None:
            lines.append(f"bounds.a{i} = {v!r}")
    if hasattr(model, "yield_coef"):
        lines.append(f"yield = {model.yield_coef.spec()}")
    if hasattr(model, "plastic"):
        lines.append(f"plastic = {model.plastic.spec()}")
    if model.variant is Variant.GIVEN_MU:
        if callable(model.mu_of_x):
            raise ModelFileError("a position-dependent orientation factor cannot be written to a model file")
        lines.append(f"given_mu = {float(model.mu_of_x)!r}")
    sub = model if model.variant is Variant.REGULAR else getattr(model, "psi", None) or getattr(model, "psi1", None)
    if sub is not None:
        for n, (e, beta) in enumerate(sub.terms, 1):
            lines.append(f"term.{n}.coefficient = {e.spec()}")
            lines.append(f"term.{n}.shear = {beta.spec()}")
    if mu_fn is not None:
        lines.append(f"mu.alpha = {mu_fn.alpha!r}")
        lines.append("mu.frame_velocity = " + ",".join(repr(c) for c in mu_fn.frame_velocity))
        if mu_fn.mollifier is not None:
            lines.append(f"mu.radius = {mu_fn.mollifier.radius!r}")
            lines.append(f"mu.beta = {mu_fn.beta!r}")
    return "\n".join(lines) + "\n"
