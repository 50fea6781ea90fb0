"""Mutual information of the matched-filter decision variable under Gaussian inputs.

The decision variable z = a b + S + nu is handled through characteristic
functions. Coupling laws are carried as weighted atoms on a uniform lattice
(cloud-in-cell binning of Monte-Carlo samples), which makes the average over
the Gaussian symbol b closed-form:

    E_b[phi_a(b u)] = sum_m w_m exp(-E a_m^2 u^2 / 2)

Densities are recovered by FFT on conjugate grids u_k = (k - n/2) du,
z_m = (m - n/2) dz with du * dz = 2 pi / n.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, signal, special

from .errors import GridError
from .montecarlo import users_for_load
from .signal_model import SystemConfig
from .transceiver import Scheme, overlap_probability
from .trial_coordinator import BatchTask, TrialCoordinator

logger = logging.getLogger(__name__)

GRID_POINTS = 2 ** 16
LATTICE_POINTS = 1025
HERMITE_NODES = 64
EDGE_TOLERANCE = 1e-8
MAX_CLIPPED_MASS = 1e-4
SMOOTHING_FRACTION = 1e-6
CHUNK = 4096
MI_COLUMNS = ["snr_db", "scheme", "beta", "sigma_xi2", "iota",
              "mi_nats", "mi_lower_nats", "spectral_eff", "spectral_eff_lower"]


@dataclass(frozen=True, eq=False)
class Atoms:
    """Discrete law: weights at sorted locations, summing to one."""
    locations: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_samples(cls, samples, points: int = LATTICE_POINTS, lo: float = -1.0,
                     hi: float = 1.0) -> "Atoms":
        """Cloud-in-cell binning onto a uniform lattice covering [lo, hi] and the samples.

        Preserves the sample mean exactly; locations on the lattice (0, +-1 for
        the default span) are kept exact.
        """
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size == 0:
            raise GridError("cannot build a coupling law from zero samples")
        lo = min(lo, float(samples.min()))
        hi = max(hi, float(samples.max()))
        lattice = np.linspace(lo, hi, points)
        step = lattice[1] - lattice[0]
        position = (samples - lo) / step
        index = np.clip(np.floor(position).astype(int), 0, points - 2)
        frac = position - index
        weights = np.bincount(index, weights=1.0 - frac, minlength=points)
        weights += np.bincount(index + 1, weights=frac, minlength=points)
        keep = weights > 0
        return cls(lattice[keep], weights[keep] / samples.size)

    @classmethod
    def point_mass(cls, location: float) -> "Atoms":
        return cls(np.array([float(location)]), np.array([1.0]))

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.weights, self.locations ** 2))

    @property
    def max_square(self) -> float:
        return float(np.max(self.locations ** 2))


def _atom_sum(u: np.ndarray, atoms: Atoms, kernel) -> np.ndarray:
    out = np.empty(u.size, dtype=complex if kernel is _oscillating else float)
    for start in range(0, u.size, CHUNK):
        chunk = u[start:start + CHUNK]
        out[start:start + CHUNK] = kernel(chunk, atoms.locations) @ atoms.weights
    return out


def _oscillating(u, x):
    return np.exp(1j * np.outer(u, x))


@dataclass(eq=False)
class GriddedCf:
    """Characteristic function sampled on u_k = (k - n/2) du.

    A cf built from atoms keeps them; its values are computed on first access.
    """
    u_grid: np.ndarray
    _values: Optional[np.ndarray] = field(default=None, repr=False)
    atoms: Optional[Atoms] = None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _atom_sum(self.u_grid, self.atoms, _oscillating)
        return self._values

    @property
    def delta_u(self) -> float:
        return float(self.u_grid[1] - self.u_grid[0])

    def with_values(self, values: np.ndarray) -> "GriddedCf":
        return GriddedCf(self.u_grid, values)


@dataclass(eq=False)
class GriddedPdf:
    z_grid: np.ndarray
    density: np.ndarray
    clipped_mass: float = 0.0

    @property
    def delta_z(self) -> float:
        return float(self.z_grid[1] - self.z_grid[0])

    def integral(self) -> float:
        return float(integrate.trapezoid(self.density, dx=self.delta_z))

    def moment(self, order: int) -> float:
        return float(integrate.trapezoid(self.density * self.z_grid ** order, dx=self.delta_z))

    def to_frame(self, name: str = "density") -> pd.DataFrame:
        return pd.DataFrame({"z": self.z_grid, name: self.density})


@dataclass(frozen=True)
class FrequencyGrid:
    n: int
    U: float

    @property
    def delta_u(self) -> float:
        return 2.0 * self.U / self.n

    @property
    def delta_z(self) -> float:
        return math.pi / self.U

    @property
    def u(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.delta_u

    @property
    def z(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.delta_z


@dataclass(frozen=True)
class LoadParams:
    """beta = K/N and the effective load beta_eff = beta (2(L+1) iota - 1) / iota."""
    beta: float
    L: int
    iota: int = 1
    N: Optional[int] = None

    @property
    def beta_eff(self) -> float:
        return self.beta * (2 * (self.L + 1) * self.iota - 1) / self.iota

    @property
    def interferers(self) -> int:
        if self.N is None:
            raise GridError("finite-K interference needs N")
        return users_for_load(self.N, self.beta) - 1

    @property
    def overlap(self) -> float:
        if self.N is None:
            raise GridError("finite-K interference needs N")
        return overlap_probability(self.N, self.L, self.iota)


def choose_grid(symbol_energy: float, max_self_square: float, interference_var: float,
                noise_var: float, n: int = GRID_POINTS) -> FrequencyGrid:
    """U large enough for the noise factor to fall below the edge tolerance,
    and small enough for the z-grid to hold 12 standard deviations of z."""
    if noise_var <= 0:
        raise GridError("grid selection needs a positive noise variance")
    u_decay = math.sqrt(2.0 * math.log(10.0 / EDGE_TOLERANCE) / noise_var)
    z_needed = 12.0 * math.sqrt(symbol_energy * max_self_square + interference_var + noise_var)
    u_span = n * math.pi / (2.0 * z_needed)
    if u_span < u_decay:
        raise GridError(
            f"grid too narrow: {n} points cannot hold |z| <= {z_needed:.3g} with U >= {u_decay:.3g}; "
            "use more grid points"
        )
    grid = FrequencyGrid(n=n, U=min(u_span, 16.0 * u_decay))
    logger.debug(f"Grid n={n}, U={grid.U:.4g}, dz={grid.delta_z:.3g}")
    return grid


def cf_of_samples(samples, u_grid: np.ndarray, points: int = LATTICE_POINTS) -> GriddedCf:
    """Empirical cf of the samples, through their lattice law."""
    return GriddedCf(np.asarray(u_grid, dtype=float), atoms=Atoms.from_samples(samples, points))


def symbol_average_cf(cf: GriddedCf, symbol_energy: float, nodes: int = HERMITE_NODES) -> GriddedCf:
    """phi_bar(u) = E[phi(b u)] for b ~ N(0, E)."""
    u = cf.u_grid
    if symbol_energy == 0:
        return GriddedCf(u, np.ones(u.size))
    if cf.atoms is not None:
        def gaussian(chunk, x):
            return np.exp(-0.5 * symbol_energy * np.outer(chunk ** 2, x ** 2))
        return GriddedCf(u, _atom_sum(u, cf.atoms, gaussian))
    x, w = special.roots_hermite(nodes)
    values = np.zeros(u.size, dtype=complex)
    for xi, wi in zip(x, w / math.sqrt(math.pi)):
        scaled = math.sqrt(2.0 * symbol_energy) * xi * u
        re = np.interp(scaled, u, cf.values.real, left=0.0, right=0.0)
        im = np.interp(scaled, u, cf.values.imag, left=0.0, right=0.0)
        values += wi * (re + 1j * im)
    return GriddedCf(u, values.real if np.allclose(values.imag, 0.0) else values)


def interference_cf(cf_bar: GriddedCf, load: LoadParams, mode: str = "asymptotic") -> GriddedCf:
    """finite: (1 - f (1 - phi_bar))^(K-1); asymptotic: exp(-beta_eff (1 - phi_bar))."""
    gap = 1.0 - cf_bar.values
    if mode == "asymptotic":
        return cf_bar.with_values(np.exp(-load.beta_eff * gap))
    if mode == "finite":
        return cf_bar.with_values((1.0 - load.overlap * gap) ** load.interferers)
    raise GridError(f"unknown interference mode '{mode}'; expected 'finite' or 'asymptotic'")


def add_noise_cf(cf: GriddedCf, noise_var: float) -> GriddedCf:
    if noise_var < 0:
        raise GridError("noise variance must be >= 0")
    if noise_var == 0:
        return cf.with_values(cf.values.copy())
    return cf.with_values(cf.values * np.exp(-0.5 * noise_var * cf.u_grid ** 2))


def pdf_from_cf(cf: GriddedCf) -> GriddedPdf:
    phi = cf.values
    n = phi.size
    du = cf.delta_u
    edge = max(abs(phi[0]), abs(phi[-1]))
    if edge >= EDGE_TOLERANCE:
        U = abs(cf.u_grid[0])
        raise GridError(f"grid too narrow: |phi(U)| = {edge:.2e} at U = {U:.4g}; use a larger U")
    density = du / (2.0 * math.pi) * np.real(np.fft.fftshift(np.fft.fft(np.fft.ifftshift(phi))))
    dz = 2.0 * math.pi / (n * du)
    z = (np.arange(n) - n // 2) * dz
    return _clipped(z, density)


def _clipped(z: np.ndarray, density: np.ndarray) -> GriddedPdf:
    dz = z[1] - z[0]
    clipped = float(-np.sum(np.minimum(density, 0.0)) * dz)
    if clipped > MAX_CLIPPED_MASS:
        raise GridError(f"negative pdf ripple carries mass {clipped:.2e}; refine the grid")
    density = np.maximum(density, 0.0)
    density = density / integrate.trapezoid(density, dx=dz)
    return GriddedPdf(z, density, clipped)


def differential_entropy(pdf: GriddedPdf) -> float:
    """-sum p ln p dz, with 0 ln 0 = 0 (nats)."""
    return float(np.sum(special.entr(pdf.density)) * pdf.delta_z)


def _deposit(z_count: int, dz: float, positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Cloud-in-cell weights of point masses at the given z values."""
    position = positions / dz + z_count // 2
    index = np.clip(np.floor(position).astype(int), 0, z_count - 2)
    frac = position - index
    kernel = np.zeros(z_count)
    np.add.at(kernel, index, weights * (1.0 - frac))
    np.add.at(kernel, index + 1, weights * frac)
    return kernel


def conditional_entropy(noise_pdf: GriddedPdf, self_atoms: Atoms, symbol_energy: float,
                        nodes: int = HERMITE_NODES) -> float:
    """h(z | b) averaged over b ~ N(0, E) by Gauss-Hermite quadrature.

    z | b has density sum_m w_m p_{S+nu}(z - a_m b); h(z|b) = h(z|-b), so only
    the positive nodes are evaluated.
    """
    x, w = special.roots_hermite(nodes)
    positive = x > 0
    b_nodes = math.sqrt(2.0 * symbol_energy) * x[positive]
    b_weights = 2.0 * w[positive] / math.sqrt(math.pi)

    n = noise_pdf.density.size
    dz = noise_pdf.delta_z
    half_span = (n // 2 - 1) * dz
    total, used = 0.0, 0.0
    for b, weight in zip(b_nodes, b_weights):
        shifts = self_atoms.locations * b
        if np.max(np.abs(shifts)) > half_span:
            continue
        kernel = _deposit(n, dz, shifts, self_atoms.weights)
        density = signal.fftconvolve(kernel, noise_pdf.density, mode="full")[n // 2:n // 2 + n]
        total += weight * differential_entropy(_clipped(noise_pdf.z_grid, np.maximum(density, 0.0)))
        used += weight
    if used == 0:
        raise GridError("grid too narrow: every quadrature node falls off the z-grid")
    if used < 1.0 - 1e-6:
        logger.debug(f"Dropped quadrature weight {1.0 - used:.2e} off the z-grid")
    return total / used


def interference_variance(cross_samples, load: LoadParams, symbol_energy: float,
                          mode: str = "asymptotic") -> float:
    """Var[S] from the overlap-conditioned cross couplings (zero mass included via f)."""
    cross = np.asarray(cross_samples, dtype=float)
    if cross.size == 0 or load.beta == 0:
        return 0.0
    second = float(np.mean(cross ** 2))
    if mode == "asymptotic":
        return load.beta_eff * symbol_energy * second
    if mode == "finite":
        return load.interferers * load.overlap * symbol_energy * second
    raise GridError(f"unknown interference mode '{mode}'; expected 'finite' or 'asymptotic'")


def _effective_noise_var(config: SystemConfig) -> float:
    if config.noise_var > 0:
        return config.noise_var
    smoothing = SMOOTHING_FRACTION * config.symbol_energy
    logger.warning(f"Noise variance is zero; injecting smoothing variance {smoothing:g}")
    return smoothing


def interference_plus_noise_cf(cross_samples, load: LoadParams, symbol_energy: float,
                               noise_var: float, grid: FrequencyGrid,
                               mode: str = "asymptotic") -> GriddedCf:
    u = grid.u
    cross = np.asarray(cross_samples, dtype=float)
    if cross.size == 0 or load.beta == 0:
        interference = GriddedCf(u, np.ones(u.size))
    else:
        cf_bar = symbol_average_cf(cf_of_samples(cross, u), symbol_energy)
        interference = interference_cf(cf_bar, load, mode)
    return add_noise_cf(interference, noise_var)


def mutual_information(self_samples, cross_samples, config: SystemConfig, load: LoadParams,
                       mode: str = "asymptotic", nodes: int = HERMITE_NODES,
                       grid_points: int = GRID_POINTS) -> float:
    """I(z; b) = h(z) - h(z | b) in nats per channel use.

    ``self_samples`` are samples of a_kk; ``cross_samples`` are couplings of
    overlapping interferers.
    """
    E = config.symbol_energy
    if E == 0:
        return 0.0
    noise_var = _effective_noise_var(config)
    self_atoms = Atoms.from_samples(self_samples)
    var_s = interference_variance(cross_samples, load, E, mode)
    grid = choose_grid(E, self_atoms.max_square, var_s, noise_var, grid_points)

    noisy_interference = interference_plus_noise_cf(cross_samples, load, E, noise_var, grid, mode)
    self_bar = symbol_average_cf(GriddedCf(grid.u, atoms=self_atoms), E, nodes)
    h_z = differential_entropy(pdf_from_cf(noisy_interference.with_values(
        noisy_interference.values * self_bar.values)))
    h_zb = conditional_entropy(pdf_from_cf(noisy_interference), self_atoms, E, nodes)
    return max(h_z - h_zb, 0.0)


def gaussian_lower_bound(self_samples, interference_var: float, noise_var: float,
                         symbol_energy: float) -> float:
    """Mean over a of 1/2 ln(1 + E a^2 / (Var[S] + sigma_N^2))."""
    a = np.asarray(self_samples, dtype=float)
    if interference_var < 0 or noise_var < 0:
        raise GridError("variances must be >= 0")
    gain = symbol_energy * a ** 2
    disturbance = interference_var + noise_var
    if disturbance == 0:
        return 0.0 if not np.any(gain) else float("inf")
    return float(np.mean(0.5 * np.log1p(gain / disturbance)))


def spectral_efficiency(mi_nats: float, beta: float, iota: int) -> float:
    """R = (beta / iota) I in nats/s/Hz."""
    if mi_nats < 0:
        raise GridError("mutual information must be >= 0")
    return beta / iota * mi_nats


def sum_rate(mi_nats: float, beta: float, iota: int, bandwidth: float) -> float:
    """W R in nats/s."""
    return bandwidth * spectral_efficiency(mi_nats, beta, iota)


@dataclass(frozen=True)
class MiTask:
    self_samples: np.ndarray
    cross_samples: np.ndarray
    config: SystemConfig
    load: LoadParams
    mode: str = "asymptotic"
    nodes: int = HERMITE_NODES


def mi_point_worker(task: MiTask) -> Dict[str, float]:
    config = task.config
    mi = mutual_information(task.self_samples, task.cross_samples, config, task.load,
                            task.mode, task.nodes)
    var_s = interference_variance(task.cross_samples, task.load, config.symbol_energy, task.mode)
    lower = gaussian_lower_bound(task.self_samples, var_s, config.noise_var, config.symbol_energy)
    return {"mi_nats": mi, "mi_lower_nats": lower}


def spectral_efficiency_curve(self_samples, cross_samples, config: SystemConfig, load: LoadParams,
                              snr_grid_db: Sequence[float], scheme: Scheme, sigma_xi2: float,
                              mode: str = "asymptotic", nodes: int = HERMITE_NODES,
                              coordinator: Optional[TrialCoordinator] = None) -> pd.DataFrame:
    """MI, Gaussian lower bound and spectral efficiency over an SNR grid."""
    coordinator = coordinator or TrialCoordinator({}, workers=1)
    coordinator.handlers.setdefault("mi", mi_point_worker)
    self_samples = np.asarray(self_samples, dtype=float)
    cross_samples = np.asarray(cross_samples, dtype=float)
    tasks = [BatchTask("mi", MiTask(self_samples, cross_samples, config.with_snr_db(snr), load,
                                    mode, nodes))
             for snr in snr_grid_db]
    rows = []
    for snr, values in zip(snr_grid_db, coordinator.run(tasks)):
        rows.append({
            "snr_db": float(snr),
            "scheme": Scheme.parse(scheme).value,
            "beta": load.beta,
            "sigma_xi2": sigma_xi2,
            "iota": load.iota,
            "mi_nats": values["mi_nats"],
            "mi_lower_nats": values["mi_lower_nats"],
            "spectral_eff": spectral_efficiency(values["mi_nats"], load.beta, load.iota),
            "spectral_eff_lower": spectral_efficiency(values["mi_lower_nats"], load.beta, load.iota),
        })
        logger.info(f"MI {Scheme.parse(scheme).value} {snr:g} dB: I={values['mi_nats']:.4f} nats, "
                    f"lower bound {values['mi_lower_nats']:.4f}")
    return pd.DataFrame(rows, columns=MI_COLUMNS)


def interference_pdfs(cross_samples, load: LoadParams, symbol_energy: float, noise_var: float,
                      mode: str = "asymptotic", smoothing: Optional[float] = None,
                      grid_points: int = GRID_POINTS) -> Dict[str, GriddedPdf]:
    """Densities of a b (one overlapping interferer), S, nu and S + nu on one grid.

    a b and S carry atoms at zero; both are shown convolved with a narrow
    Gaussian of variance ``smoothing``.
    """
    if noise_var <= 0:
        raise GridError("interference densities need a positive noise variance")
    smoothing = max(1e-2 * noise_var, 1e-5 * symbol_energy) if smoothing is None else smoothing
    cross = np.asarray(cross_samples, dtype=float)
    var_s = interference_variance(cross, load, symbol_energy, mode)
    max_square = float(np.max(cross ** 2)) if cross.size else 0.0
    grid = choose_grid(symbol_energy, max_square, var_s, min(smoothing, noise_var), grid_points)
    u = grid.u

    if cross.size:
        cf_bar = symbol_average_cf(cf_of_samples(cross, u), symbol_energy)
    else:
        cf_bar = GriddedCf(u, np.ones(u.size))
    interference = interference_cf(cf_bar, load, mode) if load.beta > 0 else GriddedCf(u, np.ones(u.size))
    noise_only = add_noise_cf(GriddedCf(u, np.ones(u.size)), noise_var)
    return {
        "interferer": pdf_from_cf(add_noise_cf(cf_bar, smoothing)),
        "interference": pdf_from_cf(add_noise_cf(interference, smoothing)),
        "noise": pdf_from_cf(noise_only),
        "interference_plus_noise": pdf_from_cf(add_noise_cf(interference, noise_var)),
    }
