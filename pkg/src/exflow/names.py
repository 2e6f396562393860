"""Parsing of ``family:key=value,key=value`` names used in configs and the CLI."""


class UnknownNameError(ValueError):
    pass


def parse_name(name):
    """Split ``"power_mean:r=-1"`` into ``("power_mean", {"r": -1.0})``.

    Values are parsed as floats; integral values are returned as ints so that
    ``k=2`` can be used directly as an index.
    """
    if not isinstance(name, str) or not name.strip():
        raise UnknownNameError(f"empty name: {name!r}")
    family, _, rest = name.strip().partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, raw = item.partition("=")
            if not eq or not key.strip():
                raise UnknownNameError(f"malformed parameter {item!r} in {name!r}")
            try:
                value = float(raw)
            except ValueError:
                raise UnknownNameError(f"non-numeric parameter {item!r} in {name!r}") from None
            params[key.strip()] = int(value) if value.is_integer() else value
    return family.strip(), params


def format_name(family, params):
    if not params:
        return family
    body = ",".join(f"{k}={_fmt(v)}" for k, v in params.items())
    return f"{family}:{body}"


def _fmt(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)
