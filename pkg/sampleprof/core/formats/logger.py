"""Log points of sidecar readers, prefixed with the input and line read."""

import logging


class SourceLoggingAdapter(logging.LoggerAdapter):
    """Prefix messages with `[source:line]`, or `[source]` between records."""

    def process(self, msg, kwargs):
        source = self.extra["source"]
        if lineno := self.extra.get("lineno"):
            return f"[{source}:{lineno}] {msg}", kwargs
        return f"[{source}] {msg}", kwargs


class ContextualLogger:
    """Mixin for readers that report where in their input a message applies."""

    _logger: SourceLoggingAdapter

    def set_logger(self, logger: logging.Logger, source: str):
        self._logger = SourceLoggingAdapter(logger, {"source": source, "lineno": None})
        return self

    def set_lineno(self, lineno: int | None) -> None:
        self._logger.extra["lineno"] = lineno  # type: ignore[index]

    def debug(self, msg, *args):
        self._logger.debug(msg, *args)

    def warning(self, msg, *args):
        self._logger.warning(msg, *args)
