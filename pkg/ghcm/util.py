import json
import logging
import math
import time
from functools import wraps
from os import environ

# Constants
LABELS = (1, 2)
FLOAT_TOLERANCE = 1e-12
TIE_TOLERANCE = 1e-9
MAP_ENUMERATION_GUARD = 40
BRUTE_FORCE_GUARD = 22
ALGORITHM_VERSION = "ghcm-two-phase/1"

# Provenance tags
MAP_SEED = "map_seed"
PROPAGATED = "propagated"
DEFAULT2 = "default2"
REFINED = "refined"
PROVENANCE_TAGS = (MAP_SEED, PROPAGATED, DEFAULT2, REFINED)


# Errors
class GHCMError(Exception):
    exit_code = 1


class ConfigurationError(GHCMError, ValueError):
    exit_code = 2


class UnsupportedKernelError(ConfigurationError):
    pass


class ResourceGuardError(ConfigurationError):
    pass


class ContractError(GHCMError, AssertionError):
    pass


class CorruptInstanceError(GHCMError):
    exit_code = 3


class InfeasibleRegimeError(GHCMError):
    exit_code = 4

    def __init__(self, message, lambda_nu):
        super().__init__(message)
        self.lambda_nu = lambda_nu


class DegenerateInstanceError(GHCMError):
    pass


def require(condition, message, error=ContractError):
    if not condition:
        raise error(message)


# Environment
def env_int(name, default):
    try:
        return int(float(environ.get(name, default)))
    except (TypeError, ValueError):
        return int(default)


def env_flag(name):
    return environ.get(name, "").lower() in ("1", "true", "yes", "on")


def max_expected_edges():
    return env_int("GHCM_MAX_EXPECTED_EDGES", 5 * 10**7)


def default_threads():
    return max(1, env_int("GHCM_THREADS", 1))


# Formatting
def format_float(value):
    """Nine significant digits; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{float(value):.9g}"


# Decorators
def timed(store):
    """Record the wall-clock seconds of each call into ``store[func.__name__]``."""

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                store[func.__name__] = time.perf_counter() - start

        return wrapper

    return decorator


def requires_asymmetric_kernel(func):
    """The first positional argument must expose ``params.kernel``."""

    @wraps(func)
    def wrapper(inst, *args, **kwargs):
        require(
            inst.params.kernel.is_asymmetric_2(),
            "RECOVERY: kernel must satisfy P11 != P12 and P21 = P22",
            ConfigurationError,
        )
        return func(inst, *args, **kwargs)

    return wrapper


# Logging Configuration
class JSONFormatter(logging.Formatter):
    def format(self, record):
        log_entry = {
            "message": record.getMessage(),
            "level": record.levelname,
            "timestamp": record.created,
        }
        if hasattr(record, "extra"):
            log_entry.update(record.extra)
        return json.dumps(log_entry, default=str)


logger = logging.getLogger("ghcm")
logger.setLevel(
    getattr(logging, environ.get("GHCM_LOG_LEVEL", "INFO").upper(), logging.INFO)
)
handler = logging.StreamHandler()
handler.setFormatter(JSONFormatter())
logger.addHandler(handler)
logger.propagate = False
