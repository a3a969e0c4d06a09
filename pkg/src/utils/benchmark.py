"""
Benchmarking utility for tracking stage latencies.
Records timing data for each stage of an experiment run and provides export functionality.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from threading import RLock
from typing import Dict, Iterator, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkEvent:
    """Records a single benchmark event."""
    component: str  # e.g., "moments", "analytic", "runner"
    operation: str  # e.g., "decay_profile", "upsilon_series", "write_artifacts"
    duration_seconds: float
    timestamp: datetime = field(default_factory=datetime.now)
    metadata: Dict = field(default_factory=dict)  # n_disorder, distances, jobs, ...

    def to_dict(self) -> Dict:
        """Convert to dictionary."""
        return {
            "component": self.component,
            "operation": self.operation,
            "duration_seconds": self.duration_seconds,
            "timestamp": self.timestamp.isoformat(),
            "metadata": self.metadata
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "BenchmarkEvent":
        return cls(
            component=data["component"],
            operation=data["operation"],
            duration_seconds=data["duration_seconds"],
            timestamp=datetime.fromisoformat(data["timestamp"]),
            metadata=data.get("metadata", {})
        )


class BenchmarkTracker:
    """Tracks benchmarks across an experiment run."""

    def __init__(self, session_id: Optional[str] = None):
        """
        Initialize benchmark tracker.

        Args:
            session_id: Optional session identifier for grouping benchmarks
        """
        self.session_id = session_id or datetime.now().strftime("%Y%m%d_%H%M%S")
        self.events: List[BenchmarkEvent] = []
        self._start_times: Dict[str, float] = {}
        self._lock = RLock()

    def start_timer(self, timer_id: str) -> None:
        """Start a timer with the given ID."""
        with self._lock:
            self._start_times[timer_id] = time.perf_counter()

    def end_timer(
        self,
        timer_id: str,
        component: str,
        operation: str,
        metadata: Optional[Dict] = None
    ) -> float:
        """
        End a timer and record the benchmark.

        Returns:
            Duration in seconds
        """
        with self._lock:
            if timer_id not in self._start_times:
                raise ValueError(f"Timer '{timer_id}' was never started")

            duration = time.perf_counter() - self._start_times.pop(timer_id)
            self.events.append(BenchmarkEvent(
                component=component,
                operation=operation,
                duration_seconds=duration,
                metadata=metadata or {}
            ))
        return duration

    @contextmanager
    def stage(self, component: str, operation: str, **metadata) -> Iterator[Dict]:
        """Time a block; the yielded dict can be filled with extra metadata inside the block."""
        timer_id = f"{component}.{operation}.{id(metadata)}"
        self.start_timer(timer_id)
        try:
            yield metadata
        finally:
            duration = self.end_timer(timer_id, component, operation, metadata)
            details = ", ".join(f"{k}={v}" for k, v in metadata.items())
            logger.info("[BENCHMARK] %s.%s: %.2fs%s", component, operation, duration,
                        f" ({details})" if details else "")

    def get_summary(self) -> Dict:
        """Count, total, min, max and mean duration per component::operation."""
        with self._lock:
            durations: Dict[str, List[float]] = {}
            for event in self.events:
                durations.setdefault(f"{event.component}::{event.operation}", []).append(event.duration_seconds)
        return {
            key: {"count": len(values), "total_time": sum(values), "min_time": min(values),
                  "max_time": max(values), "avg_time": sum(values) / len(values)}
            for key, values in durations.items()
        }

    def to_dict(self) -> Dict:
        """Convert all events to dictionary format."""
        with self._lock:
            return {
                "session_id": self.session_id,
                "timestamp": datetime.now().isoformat(),
                "events": [event.to_dict() for event in self.events],
                "summary": self.get_summary()
            }

    def save_json(self, filepath: Path) -> None:
        """Save benchmark data to JSON file (written to a temporary file, then moved in place)."""
        filepath.parent.mkdir(parents=True, exist_ok=True)
        tmp_path = filepath.with_suffix(filepath.suffix + ".tmp")

        with self._lock:
            payload = self.to_dict()

        with open(tmp_path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, default=str)
            f.flush()

        tmp_path.replace(filepath)
        logger.debug("Benchmark data saved to %s", filepath)

    def load_json(self, filepath: Path) -> None:
        """Load benchmark data from JSON file."""
        with open(filepath, 'r', encoding='utf-8') as f:
            data = json.load(f)

        with self._lock:
            self.session_id = data.get("session_id", self.session_id)
            self.events = [BenchmarkEvent.from_dict(e) for e in data.get("events", [])]

    def format_summary(self) -> str:
        """Formatted summary of benchmarks."""
        lines = ["=" * 80, "BENCHMARK SUMMARY", "=" * 80]
        for key, stats in sorted(self.get_summary().items()):
            component, operation = key.split("::")
            lines.append(f"{component} :: {operation}")
            lines.append(f"  Count:     {stats['count']}")
            lines.append(f"  Total:     {stats['total_time']:.2f}s")
            lines.append(f"  Average:   {stats['avg_time']:.2f}s")
            lines.append(f"  Min:       {stats['min_time']:.2f}s")
            lines.append(f"  Max:       {stats['max_time']:.2f}s")
        with self._lock:
            total_time = sum(event.duration_seconds for event in self.events)
        lines.append("=" * 80)
        lines.append(f"TOTAL RUN TIME: {total_time:.2f}s")
        return "\n".join(lines)


# Global benchmark tracker instance
_benchmark_tracker: Optional[BenchmarkTracker] = None


def get_benchmark_tracker(session_id: Optional[str] = None) -> BenchmarkTracker:
    """Get or create the global benchmark tracker."""
    global _benchmark_tracker
    if _benchmark_tracker is None:
        _benchmark_tracker = BenchmarkTracker(session_id)
    return _benchmark_tracker


def reset_benchmark_tracker() -> None:
    """Reset the global benchmark tracker."""
    global _benchmark_tracker
    _benchmark_tracker = None
