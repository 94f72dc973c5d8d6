import logging
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from threading import RLock
from typing import Any, Dict, List, Optional, Tuple, Union

from .json_utils import dump_json, to_json_serializable

logger = logging.getLogger(__name__)


@dataclass
class ReportConfiguration:
    """Configuration for Report behavior."""

    enabled: bool = True
    record_timeline: bool = True


class Report:
    """Collects counters, histograms and timeline events emitted while training."""

    def __init__(self, config: Optional[ReportConfiguration] = None):
        """
        Initialize a fresh report with empty storage.

        Args:
            config: Optional configuration object. If None, uses default configuration.
        """
        self._config = config if config is not None else ReportConfiguration()
        # Counts: value -> number of times count(value) was called
        self._counts: Dict[Any, int] = {}
        # Function names that emitted each counted value
        self._count_sites: Dict[Any, List[str]] = {}
        # Histograms: name -> list of (number, function_name)
        self._histograms: Dict[str, List[Tuple[float, str]]] = {}
        # Timeline: list of events in emission order
        self._timeline: List[Dict[str, Any]] = []
        # Thread safety
        self._lock = RLock()  # Reentrant lock for nested calls
        self._initialized = False

    @staticmethod
    def _caller_name() -> str:
        # 0 = _caller_name, 1 = count/hist/timeline, 2 = the instrumented function
        try:
            return sys._getframe(2).f_code.co_name
        except ValueError:
            return "<unknown>"

    def count(self, value: Any):
        """
        Count how many times a value was reported.

        Args:
            value: Hashable value to count occurrences of
        """
        if not self._config.enabled:
            return
        site = self._caller_name()
        with self._lock:
            self._initialized = True
            self._counts[value] = self._counts.get(value, 0) + 1
            sites = self._count_sites.setdefault(value, [])
            if site not in sites:
                sites.append(site)

    def hist(self, name: str, num: float):
        """
        Collect a number under a histogram name.

        Args:
            name: Histogram the number belongs to
            num: The number to add to the histogram
        """
        if not self._config.enabled:
            return
        site = self._caller_name()
        with self._lock:
            self._initialized = True
            self._histograms.setdefault(name, []).append((float(num), site))

    def timeline(self, event_name: str, **details: Any):
        """
        Record an event with a wall-clock timestamp.

        Args:
            event_name: Name of the event to record
            **details: Extra JSON-serializable fields stored with the event
        """
        if not (self._config.enabled and self._config.record_timeline):
            return
        site = self._caller_name()
        with self._lock:
            self._initialized = True
            self._timeline.append(
                {
                    "timestamp": time.time(),
                    "event_name": event_name,
                    "function_name": site,
                    "details": details,
                }
            )

    def get_count(self, value: Any) -> int:
        """Number of times count(value) was called."""
        with self._lock:
            return self._counts.get(value, 0)

    def get_histogram(self, name: str) -> List[float]:
        with self._lock:
            return [num for num, _ in self._histograms.get(name, [])]

    def get_timeline(self) -> List[Dict[str, Any]]:
        with self._lock:
            return list(self._timeline)

    def init(self, config: Optional[ReportConfiguration] = None, clear: bool = False, warn: bool = True):
        """
        Initialize the report with a new configuration.

        Args:
            config: Optional configuration object. If None, keeps the current configuration.
            clear: If True, clears all existing data. If False (default), preserves existing data.
            warn: If True (default), logs a warning when clearing collected data.
        """
        with self._lock:
            has_data = bool(self._counts or self._histograms or self._timeline)
            if clear:
                if warn and self._initialized and has_data:
                    logger.warning("Report.init() clearing existing data.")
                self._counts.clear()
                self._count_sites.clear()
                self._histograms.clear()
                self._timeline.clear()

            self._initialized = True
            if config is not None:
                self._config = config

            # Environment variable takes precedence over code-specified configuration
            env_enabled = os.getenv("D2V_REPORT", "").lower()
            if env_enabled in ("0", "off", "false"):
                self._config.enabled = False
            elif env_enabled in ("1", "on", "true"):
                self._config.enabled = True

    def to_json(self) -> Dict[str, Any]:
        """
        Convert report data to JSON-serializable format.

        Returns:
            Dictionary with 'generated_at', 'counts', 'histograms' and 'timeline' keys.
        """
        with self._lock:
            counts = [
                {
                    "value": to_json_serializable(value),
                    "count": count,
                    "function_names": list(self._count_sites.get(value, [])),
                }
                for value, count in self._counts.items()
            ]
            histograms = []
            for name, entries in self._histograms.items():
                values = [num for num, _ in entries]
                histograms.append(
                    {
                        "name": name,
                        "values": to_json_serializable(values),
                        "function_names": sorted({site for _, site in entries}),
                    }
                )
            return {
                "generated_at": datetime.now().isoformat(),
                "counts": counts,
                "histograms": histograms,
                "timeline": to_json_serializable(self._timeline),
            }


# Global singleton instance
_report_instance = Report()


def get_report() -> Report:
    """Get the global report instance."""
    return _report_instance


def init(config: Optional[ReportConfiguration] = None, clear: bool = False, warn: bool = True):
    """
    Initialize the global report instance.

    Args:
        config: Optional configuration object. If None, keeps the current configuration.
        clear: If True, clears all existing data. If False (default), preserves existing data.
        warn: If True (default), logs a warning when clearing collected data.
    """
    _report_instance.init(config, clear=clear, warn=warn)


def generate_json(report: Optional[Report] = None, output_path: Union[str, Path] = "d2v_report.json") -> Path:
    """
    Write a report to a JSON file.

    Args:
        report: Report to write; the global report when None.
        output_path: Destination file.

    Returns:
        The path written.
    """
    report = report if report is not None else _report_instance
    path = Path(output_path)
    dump_json(path, report.to_json())
    return path
