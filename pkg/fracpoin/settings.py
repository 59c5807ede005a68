import os


def _int_env(name: str, default: int, minimum: int) -> int:
    raw = os.environ.get(name, str(default))
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None
    if value < minimum:
        raise ValueError(f"{name} must be at least {minimum}, got {value}")
    return value


# Worker pool size for pair quadrature
THREADS = _int_env("FRACPOIN_THREADS", 1, 1)

LOG_LEVEL = os.environ.get("FRACPOIN_LOG_LEVEL", "WARNING").upper()

# Grid refinement depth r (2**r subdivisions per domain cell)
DEPTH = _int_env("FRACPOIN_DEPTH", 5, 0)

# Recursive subdivision depth r_d for touching cell pairs
DIAGONAL_DEPTH = _int_env("FRACPOIN_DIAGONAL_DEPTH", 3, 0)
