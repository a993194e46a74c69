import sys
import time
import warnings
from collections.abc import Generator
from contextlib import contextmanager
from contextvars import ContextVar
from warnings import warn

from tqdm import tqdm

_SLOW_GROUP_SECONDS = 1.0

_CURRENT_GROUP: ContextVar[str | None] = ContextVar("log_group", default=None)


@contextmanager
def log_group(name: str) -> Generator[None, None, None]:
    current_name = _CURRENT_GROUP.get()
    if current_name is not None:
        raise RuntimeError(f"Can't nest '{name}' log group inside '{current_name}'")

    token = _CURRENT_GROUP.set(name)
    start = time.perf_counter()
    tqdm.write(f"::group::{name}", file=sys.stderr)
    try:
        yield
    finally:
        duration = time.perf_counter() - start
        if duration > _SLOW_GROUP_SECONDS:
            tqdm.write(f"{name}: {duration:,.2f}s", file=sys.stderr)
        tqdm.write("::endgroup::", file=sys.stderr)
        _CURRENT_GROUP.reset(token)


def log(message: str) -> None:
    tqdm.write(message, file=sys.stderr)


def print_error(title: str, message: str) -> None:
    tqdm.write(f"::error title={title}::{message}", file=sys.stderr)


class ZeroVarianceWarning(Warning):
    pass


class ShiftedInstanceWarning(Warning):
    pass


class GridSkippedWarning(Warning):
    pass


def _formatwarning(
    message: Warning | str,
    category: type[Warning],
    filename: str,
    lineno: int,
    line: str | None = None,
) -> str:
    return (
        "::warning "
        f"file={filename},line={lineno},title={category.__name__}::"
        f"{message}\n"
    )


warnings.formatwarning = _formatwarning


__all__ = [
    "GridSkippedWarning",
    "ShiftedInstanceWarning",
    "ZeroVarianceWarning",
    "log",
    "log_group",
    "print_error",
    "warn",
]
