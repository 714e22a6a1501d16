"""Plot specification and rendering."""

from dataclasses import dataclass

import matplotlib.pyplot as plt
import pandas as pd

# figure kind -> (y column, error-bar column or None, default y label)
KIND_COLUMNS = {
    "rate_vs_snr": ("mean_sum_rate", "std_sum_rate",
                    "mean sum rate (bits/s/Hz)"),
    "time_vs_snr": ("mean_wall_ms", None, "mean wall time (ms)"),
}

GROUP_KEYS = ("algorithm", "streams")


class PlotError(Exception):
    """Input CSV does not satisfy the summary contract."""


@dataclass
class PlotSpec:
    """What to plot: input CSV, figure kind, grouping key, output path."""

    input: str
    kind: str = "rate_vs_snr"
    group: str = "algorithm"
    out: str | None = None
    title: str | None = None
    xlabel: str = "SNR (dB)"
    ylabel: str | None = None

    def __post_init__(self):
        if self.kind not in KIND_COLUMNS:
            raise ValueError(
                f"kind must be one of {sorted(KIND_COLUMNS)}, got {self.kind!r}")
        if self.group not in GROUP_KEYS:
            raise ValueError(
                f"group must be one of {GROUP_KEYS}, got {self.group!r}")


def load_summary(spec: PlotSpec) -> pd.DataFrame:
    """Read the summary CSV and check the columns the spec needs."""
    try:
        df = pd.read_csv(spec.input, dtype={"streams": str})
    except FileNotFoundError as exc:
        raise PlotError(f"cannot read {spec.input}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise PlotError(f"{spec.input} is empty") from exc
    except pd.errors.ParserError as exc:
        raise PlotError(f"{spec.input} is not valid CSV: {exc}") from exc
    y_col, _, _ = KIND_COLUMNS[spec.kind]
    for col in ("snr_db", spec.group, y_col):
        if col not in df.columns:
            raise PlotError(f"missing column: {col}")
    if len(df) == 0:
        raise PlotError("no data rows")
    return df


def render(spec: PlotSpec):
    """Draw one line per group, x = snr_db, y = the kind's mean column.

    Returns the matplotlib figure; also writes it to spec.out when set.
    Error bars are drawn when the kind has a std column and the CSV
    carries it.
    """
    df = load_summary(spec)
    y_col, err_col, y_label = KIND_COLUMNS[spec.kind]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    try:
        for key, sub in df.groupby(spec.group, sort=True):
            sub = sub.sort_values("snr_db")
            label = str(key)
            x = sub["snr_db"].to_numpy()
            y = sub[y_col].to_numpy()
            (line,) = ax.plot(x, y, marker="o", label=label)
            if err_col is not None and err_col in df.columns:
                ax.errorbar(x, y, yerr=sub[err_col].to_numpy(), fmt="none",
                            capsize=3, ecolor=line.get_color(),
                            label="_nolegend_")
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel if spec.ylabel is not None else y_label)
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, alpha=0.4)
        ax.legend(title=spec.group)
        fig.tight_layout()
        if spec.out:
            fig.savefig(spec.out)
    except Exception:
        plt.close(fig)
        raise
    return fig
