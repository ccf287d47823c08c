# Re-export from config
from .config import RunConfig, parse_run_config, load_run_config, resolved_text

# Re-export from suite
from .suite import GRADCHECK_SUITE, run_suite, format_suite

# Re-export from main
from .main import build_parser, main


__all__ = [
    "RunConfig",
    "parse_run_config",
    "load_run_config",
    "resolved_text",
    "GRADCHECK_SUITE",
    "run_suite",
    "format_suite",
    "build_parser",
    "main",
]
