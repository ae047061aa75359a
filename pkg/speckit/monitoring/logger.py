import logging
import sys
from typing import Any, Dict, Optional

import structlog


def configure_logging(log_level: str = "INFO", json_logs: bool = False) -> None:
    """Configure structlog once for the process; events go to stderr."""
    level = getattr(logging, str(log_level).upper(), None)
    if not isinstance(level, int):
        level = logging.INFO

    renderer = (
        structlog.processors.JSONRenderer()
        if json_logs
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        wrapper_class=structlog.make_filtering_bound_logger(level),
        cache_logger_on_first_use=False,
    )
    logging.basicConfig(level=level, stream=sys.stderr)


class RunLogger:
    """Structured logger for pipeline stages."""

    def __init__(self, service_name: str = "speckit", run_id: Optional[str] = None):
        context = {"service_name": service_name}
        if run_id is not None:
            context["run_id"] = run_id
        self.logger = structlog.get_logger(**context)

    def log_stage(self,
                  stage: str,
                  parameters: Dict[str, Any],
                  outputs: Dict[str, Any],
                  duration: float):
        """Log a completed pipeline stage."""
        self.logger.info(
            "stage_completed",
            stage=stage,
            parameters=parameters,
            outputs=outputs,
            duration=duration
        )

    def log_selection(self, report):
        """Log the selected regularization parameter."""
        self.logger.info(
            "selection",
            mode=report.mode,
            g=report.g,
            alpha_g=report.alpha_g,
            predicted_error=report.predicted_error,
            eta=report.eta_used,
            norm_A=report.norm_A
        )

    def log_failure(self,
                    command: str,
                    error: BaseException,
                    exit_code: int,
                    hint: Optional[str] = None):
        """Log a command that stopped with ``exit_code``."""
        self.logger.error(
            "command_failed",
            command=command,
            error_type=type(error).__name__,
            message=str(error),
            exit_code=exit_code,
            hint=hint
        )
