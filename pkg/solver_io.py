# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Console IO and error types shared by every solver module.

Library functions accept an optional ``log_func`` callable and stay silent
without one; the CLI hands them ``SolverIO.log``.
"""

import sys

try:
    from colorama import Fore, Style, init as colorama_init
except ImportError:  # pragma: no cover - colorama is in requirements.txt
    Fore = Style = None
    colorama_init = None


# --- Errors ---

class ShapeOptError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(ShapeOptError):
    """Invalid parameters or schema violation. ``path`` names the offending key."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(ShapeOptError):
    """Geometric precondition failed (degenerate radius, mismatched domains, overlap)."""


class EmptyOperatorError(ShapeOptError):
    """Exact-mode operator requested on an empty support."""


class DegeneratePhaseError(ShapeOptError):
    """Phase density vanishes everywhere, so lambda_k is undefined."""


class SolverError(ShapeOptError):
    """Iterative solver did not reach its tolerance."""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        if residuals is not None:
            message = f"{message} (residuals: {residuals})"
        super().__init__(message)


# Exit codes of run_shapeopt.py
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


def exit_code_for(exc):
    """Maps an exception to the CLI exit code."""
    if isinstance(exc, (SolverError, EmptyOperatorError)):
        return EXIT_SOLVER
    return EXIT_INPUT


class SolverIO:
    """Handles console output for runs. Subclass this to redirect messages elsewhere."""

    MARKERS = {
        "info": "[INFO]",
        "warning": "[WARNING]",
        "error": "[ERROR]",
    }

    def __init__(self, quiet=False, color=True):
        self.quiet = quiet
        self.stop_requested = False
        self.warnings = []
        self.color = color and Fore is not None
        if self.color:
            colorama_init()

    def _paint(self, level, text):
        if not self.color:
            return text
        colors = {"info": Fore.CYAN, "warning": Fore.YELLOW, "error": Fore.RED}
        return f"{colors[level]}{text}{Style.RESET_ALL}"

    def _emit(self, level, message, stream=None):
        marker = self._paint(level, self.MARKERS[level])
        line = f"{marker} {message}"
        stream = stream or sys.stdout
        try:
            print(line, file=stream)
        except UnicodeEncodeError:
            # Fallback for consoles that cannot encode the message
            print(line.encode("utf-8", errors="ignore").decode("utf-8"), file=stream)

    def log(self, message):
        # Library code prefixes its own warnings; they are recorded even in quiet mode
        if message.startswith("[WARNING]"):
            self.warn(message[len("[WARNING]"):].strip())
            return
        if not self.quiet:
            self._emit("info", message)

    def warn(self, message):
        self.warnings.append(message)
        if not self.quiet:
            self._emit("warning", message)

    def error(self, message):
        # Errors are shown even in quiet mode
        self._emit("error", message, stream=sys.stderr)

    def is_stopped(self):
        """Check if a stop was requested (long optimizer loops poll this)."""
        return self.stop_requested
