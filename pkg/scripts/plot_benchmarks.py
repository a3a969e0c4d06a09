"""
Benchmark Visualization Script - where a run spends its time.
Renders a run's benchmark.json as an interactive timeline of stages and a
per-operation latency breakdown.

Usage:
    python scripts/plot_benchmarks.py <run_dir or benchmark.json>
    python scripts/plot_benchmarks.py  # Uses the latest run under ANDERSON_LAB_OUT
"""

import json
import sys
from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.utils import Config


COMPONENT_COLORS = {
    'runner': '#66BB6A',
    'moments': '#42A5F5',
    'identities': '#AB47BC',
    'analytic': '#FFA726',
}


def load_benchmark_data(filepath: Path) -> Dict:
    """Load benchmark data from a run directory or a benchmark.json file."""
    if filepath.is_dir():
        filepath = filepath / "benchmark.json"
    if not filepath.exists():
        raise FileNotFoundError(f"Benchmark file not found: {filepath}")

    with open(filepath, 'r', encoding='utf-8') as f:
        return json.load(f)


def find_latest_benchmark() -> Path:
    """Find the benchmark file of the most recent run."""
    benchmark_files = list(Config.OUTPUT_ROOT.glob("*/benchmark.json"))

    if not benchmark_files:
        raise FileNotFoundError(f"No benchmark files found under {Config.OUTPUT_ROOT}")

    return max(benchmark_files, key=lambda p: p.stat().st_mtime)


def aggregate_by_operation(events: List[Dict]) -> Dict[str, List[float]]:
    """Durations grouped by component::operation."""
    times = defaultdict(list)
    for event in events:
        times[f"{event['component']}::{event['operation']}"].append(event['duration_seconds'])
    return times


def timeline(events: List[Dict]) -> List[Dict]:
    """Events placed on a common clock; each event's timestamp marks its end."""
    if not events:
        return []
    ends = [datetime.fromisoformat(e['timestamp']) for e in events]
    origin = min(end.timestamp() - e['duration_seconds'] for end, e in zip(ends, events))
    items = []
    for end, event in zip(ends, events):
        start = end.timestamp() - event['duration_seconds'] - origin
        items.append({**event, 'start': start})
    return sorted(items, key=lambda item: item['start'])


def create_run_visualization(events: List[Dict], output_path: Optional[Path] = None) -> None:
    """
    Two panels:
    1. Stage timeline (Gantt-style), nested stages drawn on their own row
    2. Total time per operation, with counts
    """
    if not events:
        print("No events to visualize")
        return

    items = timeline(events)
    per_operation = aggregate_by_operation(events)
    total_time = max(item['start'] + item['duration_seconds'] for item in items)

    fig = make_subplots(
        rows=2, cols=1,
        subplot_titles=('<b>(A) Stage timeline</b>', '<b>(B) Time per operation</b>'),
        row_heights=[0.45, 0.55],
        vertical_spacing=0.18,
    )

    for item in items:
        label = f"{item['component']}.{item['operation']}"
        color = COMPONENT_COLORS.get(item['component'], '#90A4AE')
        details = "<br>".join(f"{k}: {v}" for k, v in (item.get('metadata') or {}).items())
        fig.add_trace(go.Bar(
            x=[item['duration_seconds']],
            y=[item['component']],
            base=item['start'],
            orientation='h',
            marker=dict(color=color, line=dict(color='rgba(0,0,0,0.2)', width=1)),
            hovertemplate=f"<b>{label}</b><br>Duration: {item['duration_seconds']:.2f}s<br>{details}<extra></extra>",
            showlegend=False,
        ), row=1, col=1)

    keys = sorted(per_operation, key=lambda k: -sum(per_operation[k]))
    totals = [sum(per_operation[k]) for k in keys]
    fig.add_trace(go.Bar(
        x=[k.replace('::', '.') for k in keys],
        y=totals,
        marker=dict(color=[COMPONENT_COLORS.get(k.split('::')[0], '#90A4AE') for k in keys]),
        text=[f"{t:.2f}s<br>(n={len(per_operation[k])})" for k, t in zip(keys, totals)],
        textposition='outside',
        showlegend=False,
    ), row=2, col=1)

    fig.update_xaxes(title_text="Time (seconds)", row=1, col=1, showgrid=True, gridcolor='#E0E0E0')
    fig.update_yaxes(title_text="Time (seconds)", row=2, col=1, showgrid=True, gridcolor='#E0E0E0',
                     range=[0, max(totals) * 1.25 if totals else 1])
    fig.update_layout(
        height=900,
        plot_bgcolor='white',
        paper_bgcolor='#FAFAFA',
        font=dict(family='Arial', size=14, color='#333'),
        title=f"Run time {total_time:.1f}s",
        margin=dict(t=90, b=60, l=60, r=60),
    )

    if output_path:
        fig.write_html(output_path)
        print(f"✓ Saved interactive: {output_path}")
    else:
        fig.show()


def print_run_stats(events: List[Dict]) -> None:
    """Print statistics per operation."""
    if not events:
        print("\nNo events recorded")
        return

    per_operation = aggregate_by_operation(events)

    print(f"\n{'='*80}")
    print("RUN BENCHMARK ANALYSIS")
    print(f"{'='*80}")

    for key in sorted(per_operation):
        times = per_operation[key]
        print(f"\n{key}")
        print(f"  Count:     {len(times)}")
        print(f"  Avg:       {np.mean(times):.3f}s")
        print(f"  Min/Max:   {np.min(times):.3f}s / {np.max(times):.3f}s")
        print(f"  Total:     {sum(times):.3f}s")
    print(f"{'='*80}\n")


def main():
    """Main entry point."""
    if len(sys.argv) > 1:
        benchmark_file = Path(sys.argv[1])
    else:
        print("Finding latest benchmark file...")
        benchmark_file = find_latest_benchmark()

    data = load_benchmark_data(benchmark_file)
    run_dir = benchmark_file if benchmark_file.is_dir() else benchmark_file.parent
    print(f"\nLoaded: {run_dir.name}\n")

    print_run_stats(data['events'])
    create_run_visualization(data['events'], run_dir / "benchmark.html")


if __name__ == "__main__":
    main()
