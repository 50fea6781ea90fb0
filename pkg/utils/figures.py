"""Figure Generator

Matplotlib renderings of every result type: error-probability curves,
coupling histograms, interference densities and spectral efficiency.
"""

import base64
import io
import logging
from typing import Any, Dict, List

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .montecarlo import CouplingStats
from .mutual_info import GriddedPdf

logger = logging.getLogger(__name__)

SCHEME_STYLE = {"ar": {"color": "#1E88E5", "linestyle": "-"},
                "tr": {"color": "#D81B60", "linestyle": "--"}}


class FigureGenerator:
    """
    Builds matplotlib figures from result tables and exports them as PNG
    """

    def __init__(self, dpi: int = 150):
        self.dpi = dpi
        self.figure_types = ["ber", "couplings", "interference", "spectral_efficiency"]

    def ber_curves(self, frame: pd.DataFrame):
        """
        P_e vs SNR, one curve per (scheme, beta, sigma_xi2)
        """
        fig, ax = plt.subplots(figsize=(8, 5))
        for (scheme, beta, sigma), curve in frame.groupby(["scheme", "beta", "sigma_xi2"], sort=False):
            curve = curve.sort_values("snr_db")
            positive = curve["pe"] > 0
            ax.errorbar(curve["snr_db"][positive], curve["pe"][positive],
                        yerr=curve["stderr"][positive], capsize=2,
                        label=f"{scheme.upper()} beta={beta:g}, sigma2={sigma:.3g}",
                        **SCHEME_STYLE.get(scheme, {}))
        ax.set_yscale("log")
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("P_e")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        ax.set_title("Probability of error", fontsize=12, weight="bold")
        return fig

    def coupling_histograms(self, results: List[CouplingStats]):
        fig, (ax_cross, ax_self) = plt.subplots(1, 2, figsize=(11, 4))
        for stats in results:
            centers = 0.5 * (stats.bin_edges[:-1] + stats.bin_edges[1:])
            label = f"{stats.scheme.value.upper()} sigma2={stats.csi_error_var:g}"
            style = SCHEME_STYLE.get(stats.scheme.value, {})
            ax_cross.semilogy(centers, np.maximum(stats.cross_density(), 1e-6), label=label, **style)
            ax_self.plot(centers, stats.self_density(), label=label, **style)
        ax_cross.set_xlabel("cross coupling")
        ax_cross.set_ylabel("density (overlapping pairs)")
        ax_self.set_xlabel("self coupling")
        ax_self.set_ylabel("density")
        for ax in (ax_cross, ax_self):
            ax.grid(True, alpha=0.3)
            ax.legend(fontsize=8)
        fig.tight_layout()
        return fig

    def interference_pdfs(self, pdfs: Dict[str, GriddedPdf], z_limit: float = 3.0):
        fig, ax = plt.subplots(figsize=(8, 5))
        for name, pdf in pdfs.items():
            window = np.abs(pdf.z_grid) <= z_limit
            ax.semilogy(pdf.z_grid[window], np.maximum(pdf.density[window], 1e-8),
                        label=name.replace("_", " "))
        ax.set_xlabel("z")
        ax.set_ylabel("density")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        ax.set_title("Interference and noise densities", fontsize=12, weight="bold")
        return fig

    def spectral_efficiency(self, frame: pd.DataFrame):
        fig, ax = plt.subplots(figsize=(8, 5))
        for (scheme, beta, sigma), curve in frame.groupby(["scheme", "beta", "sigma_xi2"], sort=False):
            curve = curve.sort_values("snr_db")
            style = SCHEME_STYLE.get(scheme, {})
            label = f"{scheme.upper()} beta={beta:g}, sigma2={sigma:.3g}"
            ax.plot(curve["snr_db"], curve["spectral_eff"], label=label, color=style.get("color"))
            ax.plot(curve["snr_db"], curve["spectral_eff_lower"], linestyle=":", color=style.get("color"))
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("R [nats/s/Hz]")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        ax.set_title("Spectral efficiency (dotted: Gaussian lower bound)", fontsize=12, weight="bold")
        return fig

    def to_base64(self, fig) -> str:
        buf = io.BytesIO()
        fig.savefig(buf, format="png", bbox_inches="tight", dpi=self.dpi)
        buf.seek(0)
        img_base64 = base64.b64encode(buf.read()).decode("utf-8")
        plt.close(fig)
        return img_base64

    def create_visualization(self, figure_type: str, data: Any) -> Dict[str, Any]:
        """
        Render one figure type and return it as a base64 PNG
        """
        result = {"type": figure_type, "image": None, "success": False}
        builders = {
            "ber": self.ber_curves,
            "couplings": self.coupling_histograms,
            "interference": self.interference_pdfs,
            "spectral_efficiency": self.spectral_efficiency,
        }
        try:
            builder = builders[figure_type]
            result["image"] = self.to_base64(builder(data))
            result["success"] = True
            logger.info(f"Rendered {figure_type} figure")
        except Exception as e:
            logger.error(f"Error rendering {figure_type} figure: {str(e)}")
            result["error"] = str(e)
        return result
