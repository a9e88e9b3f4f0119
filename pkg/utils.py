import json
import os

from region import ConfidenceRegion, Diagnostics

# Environment fallback for --threads
THREADS_ENV = "EFFECT_CI_THREADS"


def resolve_threads(requested=None):
    """
    Number of worker threads or processes to use.

    Args:
        requested (int, optional): Value given on the command line

    Returns:
        int: requested, else EFFECT_CI_THREADS, else the CPU count
    """
    if requested is not None:
        threads = int(requested)
    elif os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    else:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be at least 1, got {threads}")
    return threads


def region_to_dict(region, labels=None):
    """
    Plain-dict form of a ConfidenceRegion.

    Args:
        region (ConfidenceRegion): The region
        labels (dict, optional): Extra top-level fields, e.g. the 1-based nodes

    Returns:
        dict: intervals, includes_zero, alpha, method, diagnostics
    """
    diag = region.diagnostics
    out = {
        'intervals': [[lo, hi] for lo, hi in region.intervals],
        'includes_zero': region.includes_zero,
        'alpha': region.alpha,
        'method': region.method,
        'diagnostics': {
            'survivor_count': diag.survivor_count,
            'evaluations': diag.evaluations,
            'wall_ms': diag.wall_ms,
            'step': diag.step
        }
    }
    if labels:
        out.update(labels)
    return out


def region_from_dict(payload):
    diag = payload.get('diagnostics', {})
    return ConfidenceRegion(
        intervals=tuple((float(lo), float(hi)) for lo, hi in payload['intervals']),
        includes_zero=bool(payload['includes_zero']),
        alpha=float(payload['alpha']),
        method=payload['method'],
        diagnostics=Diagnostics(
            survivor_count=int(diag.get('survivor_count', 0)),
            evaluations=int(diag.get('evaluations', 0)),
            wall_ms=float(diag.get('wall_ms', 0.0)),
            step=diag.get('step')
        )
    )


def region_to_json(region, labels=None):
    # repr-precision floats, so parsing gives back the same region
    return json.dumps(region_to_dict(region, labels), indent=2)


def format_region_text(region, i=None, j=None):
    """
    Human readable summary card of a region, numbers to 6 significant digits.

    Args:
        region (ConfidenceRegion): The region
        i (int, optional): 1-based intervened node
        j (int, optional): 1-based response node

    Returns:
        str: Multi-line text
    """
    target = f"C({i} -> {j})" if i is not None and j is not None else "C(i -> j)"
    level = f"{100 * (1 - region.alpha):.6g}%"
    lines = [f"{level} {region.method.upper()} confidence region for {target}"]
    if region.intervals:
        for lo, hi in region.intervals:
            lines.append(f"  [{lo:.6g}, {hi:.6g}]")
    else:
        lines.append("  no interval")
    if region.isolated_zero:
        lines.append("  plus the isolated value 0")
    lines.append(f"includes zero: {'yes' if region.includes_zero else 'no'}")
    diag = region.diagnostics
    lines.append(f"plausible orderings: {diag.survivor_count}, tests: {diag.evaluations}, "
                 f"time: {diag.wall_ms:.6g} ms")
    return "\n".join(lines)
