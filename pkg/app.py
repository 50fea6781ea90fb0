import base64
import logging
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import streamlit as st

from utils.artifact_store import ArtifactStore
from utils.cli import execute, make_coordinator
from utils.config import DEFAULTS, RunConfig, validate
from utils.errors import UwbSimError
from utils.figures import FigureGenerator
from utils.montecarlo import analytic_awgn_pe, coupling_histogram, users_for_load
from utils.mutual_info import LoadParams, interference_pdfs
from utils.transceiver import Scheme

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Page configuration
st.set_page_config(
    page_title="UWB Link Lab",
    page_icon="📡",
    layout="wide",
    initial_sidebar_state="expanded"
)

SCHEME_COLORS = {"ar": "#1E88E5", "tr": "#D81B60"}
TRAINING_LENGTHS = [2 ** m - 1 for m in range(5, 13)]


def apply_custom_css():
    """Apply custom CSS styles"""
    st.markdown("""
    <style>
    .main-header {
        font-size: 2.2rem;
        color: #1E88E5;
        text-align: center;
        margin-bottom: 1.5rem;
        font-weight: 700;
    }
    .result-box {
        background: linear-gradient(135deg, #e3f2fd 0%, #bbdefb 100%);
        padding: 1rem;
        border-radius: 12px;
        margin: 1rem 0;
        border: 2px solid #90caf9;
    }
    </style>
    """, unsafe_allow_html=True)


def initialize_session_state():
    """Initialize all session state variables"""
    defaults = {
        'results': {},
        'summaries': {},
        'coupling_stats': [],
        'figure_generator': FigureGenerator(),
    }

    for key, value in defaults.items():
        if key not in st.session_state:
            st.session_state[key] = value


def parse_list(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def format_list(values) -> str:
    return ", ".join(f"{v:g}" for v in values)


def show_sidebar() -> Dict[str, Any]:
    """Shared system parameters"""
    with st.sidebar:
        st.title("📡 UWB Link Lab")
        st.markdown("---")

        with st.expander("📶 System", expanded=True):
            N = st.number_input("Chips per symbol N", min_value=1, value=DEFAULTS["N"], step=10)
            iota = st.number_input("Impulsiveness index ι", min_value=1, max_value=16, value=DEFAULTS["iota"])
            delay_spread_ns = st.number_input("Delay spread T_d [ns]", min_value=0.0,
                                              value=DEFAULTS["delay_spread"] * 1e9, step=5.0)
            bandwidth_ghz = st.number_input("Bandwidth W [GHz]", min_value=0.01,
                                            value=DEFAULTS["bandwidth"] / 1e9, step=0.5)
            preset = st.selectbox("Channel preset", ["cm1"])

        with st.expander("🎲 Monte Carlo", expanded=False):
            trials = st.number_input("Trials per point", min_value=100, value=5000, step=1000)
            batch_size = st.number_input("Batch size", min_value=100, value=DEFAULTS["batch_size"], step=500)
            seed = st.number_input("Seed", min_value=0, value=DEFAULTS["seed"])
            workers = st.number_input("Worker processes", min_value=1, max_value=64, value=1)

        with st.expander("💾 Output", expanded=False):
            output = st.text_input("Results directory", value=DEFAULTS["output"])

        T_c = iota / (bandwidth_ghz * 1e9)
        L = int(np.floor(delay_spread_ns * bandwidth_ghz + 1e-9)) // iota
        st.markdown("---")
        st.write(f"Chip duration T_c = {T_c * 1e9:.3g} ns")
        st.write(f"Channel length L = {L} chips")

    return {
        "N": int(N), "iota": int(iota), "delay_spread": delay_spread_ns * 1e-9,
        "bandwidth": bandwidth_ghz * 1e9, "preset": preset, "trials": int(trials),
        "batch_size": int(batch_size), "seed": int(seed), "workers": int(workers), "output": output,
    }


def build_config(shared: Dict[str, Any], **fields) -> RunConfig:
    config = RunConfig(**{**shared, **fields})
    config._explicit_keys = set(shared) | set(fields)
    return config


def run_experiment(name: str, config: RunConfig):
    """Validate, run and keep the result tables; problems are shown in place"""
    diagnostics = validate(config)
    for d in diagnostics:
        if not d.is_fatal:
            st.warning(str(d))
    fatal = [d for d in diagnostics if d.is_fatal]
    if fatal:
        for d in fatal:
            st.error(str(d))
        return None

    try:
        with st.spinner(f"Running {name} experiment..."):
            tables, lines = execute(config)
    except UwbSimError as e:
        logger.error(f"{name} experiment failed: {str(e)}")
        st.error(f"❌ {str(e)}")
        return None

    st.session_state.results[name] = (tables, config.provenance())
    st.session_state.summaries[name] = lines
    return tables


def show_downloads(name: str):
    """CSV download buttons and a save-to-disk action for one experiment"""
    stored = st.session_state.results.get(name)
    if not stored:
        return
    tables, provenance = stored
    cols = st.columns(len(tables) + 1)
    for col, (table_name, frame) in zip(cols, tables.items()):
        with col:
            st.download_button(f"⬇️ {table_name}.csv", frame.to_csv(index=False),
                               file_name=f"{table_name}.csv", mime="text/csv",
                               key=f"download_{name}_{table_name}")
    with cols[-1]:
        if st.button("💾 Save to results", key=f"save_{name}"):
            try:
                store = ArtifactStore(provenance.get("output", DEFAULTS["output"]))
                paths = [store.save_table(t, frame, provenance) for t, frame in tables.items()]
                st.success(f"Saved {', '.join(paths)}")
            except OSError as e:
                logger.error(f"Saving {name} tables failed: {str(e)}")
                st.error(f"❌ {str(e)}")


def curve_figure(frame: pd.DataFrame, y: str, title: str, log_y: bool = False) -> go.Figure:
    fig = go.Figure()
    for (scheme, beta, sigma), curve in frame.groupby(["scheme", "beta", "sigma_xi2"], sort=False):
        curve = curve.sort_values("snr_db")
        values = curve[y].where(curve[y] > 0) if log_y else curve[y]
        fig.add_trace(go.Scatter(
            x=curve["snr_db"], y=values, mode="lines+markers",
            name=f"{scheme.upper()} β={beta:g}, σ²={sigma:.3g}",
            line=dict(color=SCHEME_COLORS.get(scheme), dash="solid" if scheme == "ar" else "dash"),
        ))
    fig.update_layout(title=title, xaxis_title="SNR [dB]", height=480)
    if log_y:
        fig.update_yaxes(type="log")
    return fig


def show_image(result: Dict[str, Any]):
    if result["success"]:
        st.image(base64.b64decode(result["image"]), use_container_width=True)
    else:
        st.error(f"❌ Figure failed: {result.get('error')}")


def show_png_export(figure_type: str, frame: pd.DataFrame, name: str):
    """Offer the matplotlib rendering of a result table as a PNG download"""
    result = st.session_state.figure_generator.create_visualization(figure_type, frame)
    if not result["success"]:
        st.warning(f"PNG export unavailable: {result.get('error')}")
        return
    st.download_button("🖼️ Download PNG", data=base64.b64decode(result["image"]),
                       file_name=f"{name}.png", mime="image/png", key=f"png_{name}")


def show_ber_tab(shared: Dict[str, Any]):
    st.subheader("Probability of error")
    col1, col2 = st.columns(2)
    with col1:
        schemes = st.multiselect("Schemes", ["ar", "tr"], default=["ar", "tr"], key="ber_schemes")
        betas = st.text_input("Loads β", format_list(DEFAULTS["beta"]), key="ber_beta")
        sigmas = st.text_input("CSI error variances σ_ξ²", format_list(DEFAULTS["sigma_xi2"]), key="ber_sigma")
    with col2:
        snr = st.text_input("SNR grid [dB]", format_list(DEFAULTS["snr_db"]), key="ber_snr")
        target = st.number_input("Stop after errors", min_value=0, value=DEFAULTS["target_errors"], key="ber_target")
        show_awgn = st.checkbox("Show AWGN reference", value=True)

    if st.button("▶️ Run BER sweep", type="primary", key="run_ber"):
        try:
            config = build_config(shared, experiment="ber", schemes=schemes, beta=parse_list(betas),
                                  sigma_xi2=parse_list(sigmas), snr_db=parse_list(snr),
                                  target_errors=int(target))
        except ValueError as e:
            st.error(f"❌ Cannot parse a list: {str(e)}")
            return
        run_experiment("ber", config)

    stored = st.session_state.results.get("ber")
    if stored:
        frame = stored[0]["ber"]
        fig = curve_figure(frame, "pe", "P_e vs SNR", log_y=True)
        if show_awgn:
            grid = np.linspace(frame["snr_db"].min(), frame["snr_db"].max(), 100)
            fig.add_trace(go.Scatter(x=grid, y=analytic_awgn_pe(grid), name="AWGN Q(√SNR)",
                                     line=dict(color="gray", dash="dot")))
        st.plotly_chart(fig, use_container_width=True)
        st.dataframe(frame, use_container_width=True)
        show_png_export("ber", frame, "ber")
        show_downloads("ber")


def show_equivalence_tab(shared: Dict[str, Any]):
    st.subheader("Single-user TR / AR equivalence")
    col1, col2 = st.columns(2)
    with col1:
        sigmas = st.text_input("CSI error variances σ_ξ²", "0, 0.05", key="eq_sigma")
    with col2:
        snr = st.text_input("SNR points [dB]", "6", key="eq_snr")

    if st.button("▶️ Run equivalence test", type="primary", key="run_eq"):
        try:
            config = build_config(shared, experiment="equivalence", K=1,
                                  sigma_xi2=parse_list(sigmas), snr_db=parse_list(snr))
        except ValueError as e:
            st.error(f"❌ Cannot parse a list: {str(e)}")
            return
        run_experiment("equivalence", config)

    stored = st.session_state.results.get("equivalence")
    if stored:
        for line in st.session_state.summaries.get("equivalence", []):
            if "PASS" in line:
                st.success(line)
            else:
                st.warning(line)
        st.dataframe(stored[0]["equivalence"], use_container_width=True)
        show_downloads("equivalence")


def show_couplings_tab(shared: Dict[str, Any]):
    st.subheader("Coupling coefficients")
    col1, col2 = st.columns(2)
    with col1:
        schemes = st.multiselect("Schemes", ["ar", "tr"], default=["ar", "tr"], key="cp_schemes")
        sigmas = st.text_input("CSI error variances σ_ξ²", "0, 0.1", key="cp_sigma")
    with col2:
        samples = st.number_input("Overlapping pairs", min_value=1000, value=20000, step=5000)

    if st.button("▶️ Sample couplings", type="primary", key="run_cp"):
        try:
            config = build_config(shared, experiment="coupling", schemes=schemes,
                                  sigma_xi2=parse_list(sigmas), samples=int(samples))
        except ValueError as e:
            st.error(f"❌ Cannot parse a list: {str(e)}")
            return
        fatal = [d for d in validate(config) if d.is_fatal]
        if fatal:
            for d in fatal:
                st.error(str(d))
            return
        coordinator = make_coordinator(config.workers)
        results = []
        try:
            with st.spinner("Sampling coupling coefficients..."):
                for sigma in config.sigma_xi2:
                    system = config.system_config(K=2, csi_error_var=sigma)
                    for scheme in config.schemes:
                        results.append(coupling_histogram(
                            system, Scheme.parse(scheme), sigma, config.samples, seed=config.seed,
                            preset=config.preset, batch_size=config.batch_size, coordinator=coordinator))
        except UwbSimError as e:
            logger.error(f"Coupling sampling failed: {str(e)}")
            st.error(f"❌ {str(e)}")
            return
        st.session_state.coupling_stats = results

    results = st.session_state.coupling_stats
    if results:
        show_image(st.session_state.figure_generator.create_visualization("couplings", results))
        moments = pd.DataFrame([{"scheme": s.scheme.value, "sigma_xi2": s.csi_error_var, **s.moments()}
                                for s in results])
        st.dataframe(moments, use_container_width=True)
        st.download_button("⬇️ coupling_moments.csv", moments.to_csv(index=False),
                           file_name="coupling_moments.csv", mime="text/csv")


def show_mi_tab(shared: Dict[str, Any]):
    st.subheader("Mutual information and spectral efficiency")
    col1, col2 = st.columns(2)
    with col1:
        schemes = st.multiselect("Schemes", ["ar", "tr"], default=["ar", "tr"], key="mi_schemes")
        betas = st.text_input("Loads β", "0.05", key="mi_beta")
        sigmas = st.text_input("CSI error variances σ_ξ²", "0", key="mi_sigma")
    with col2:
        snr = st.text_input("SNR grid [dB]", "0, 10, 20, 30", key="mi_snr")
        mode = st.radio("Interference model", ["asymptotic", "finite"], horizontal=True)
        samples = st.number_input("Coupling samples", min_value=1000, value=20000, step=5000, key="mi_samples")

    if st.button("▶️ Compute MI", type="primary", key="run_mi"):
        try:
            config = build_config(shared, experiment="mi", schemes=schemes, beta=parse_list(betas),
                                  sigma_xi2=parse_list(sigmas), snr_db=parse_list(snr),
                                  mi_mode=mode, samples=int(samples))
        except ValueError as e:
            st.error(f"❌ Cannot parse a list: {str(e)}")
            return
        run_experiment("mi", config)

    stored = st.session_state.results.get("mi")
    if stored:
        frame = stored[0]["mi"]
        st.plotly_chart(curve_figure(frame, "spectral_eff", "Spectral efficiency [nats/s/Hz]"),
                        use_container_width=True)
        st.dataframe(frame, use_container_width=True)
        show_png_export("spectral_efficiency", frame, "spectral_efficiency")
        show_downloads("mi")

    st.markdown("---")
    st.subheader("Interference densities")
    if not st.session_state.coupling_stats:
        st.info("Sample couplings in the Couplings tab to plot interference densities.")
        return
    labels = [f"{s.scheme.value.upper()} σ²={s.csi_error_var:g}" for s in st.session_state.coupling_stats]
    choice = st.selectbox("Coupling law", range(len(labels)), format_func=lambda i: labels[i])
    col1, col2 = st.columns(2)
    with col1:
        beta = st.number_input("Load β", min_value=0.0, value=0.05, step=0.01, key="pdf_beta")
    with col2:
        snr_pdf = st.number_input("SNR [dB]", value=10.0, step=5.0, key="pdf_snr")
    if st.button("📈 Plot densities", key="run_pdf"):
        stats = st.session_state.coupling_stats[choice]
        system = build_config(shared).system_config(K=users_for_load(shared["N"], beta)).with_snr_db(snr_pdf)
        load = LoadParams(beta=beta, L=system.L, iota=system.iota, N=system.N)
        try:
            pdfs = interference_pdfs(stats.cross, load, system.symbol_energy, system.noise_var, mode=mode)
        except UwbSimError as e:
            logger.error(f"Interference densities failed: {str(e)}")
            st.error(f"❌ {str(e)}")
            return
        show_image(st.session_state.figure_generator.create_visualization("interference", pdfs))


def show_estimation_tab(shared: Dict[str, Any]):
    st.subheader("Training-based channel estimation")
    col1, col2 = st.columns(2)
    with col1:
        length = st.selectbox("Training length N_t", TRAINING_LENGTHS, index=3)
        amplitude = st.number_input("Training amplitude A_t", min_value=0.01, value=1.0, step=0.1)
        estimator = st.selectbox("UL estimator", ["zf", "rzf", "mmse", "mf"])
    with col2:
        users = st.number_input("UL users", min_value=1, max_value=16, value=1)
        snr = st.text_input("SNR grid [dB]", "0, 10, 20", key="est_snr")
        trials = st.number_input("Trials per point", min_value=10, value=200, step=50, key="est_trials")

    if st.button("▶️ Run estimation sweep", type="primary", key="run_est"):
        try:
            config = build_config({**shared, "trials": int(trials)}, experiment="estimation",
                                  training_length=int(length), training_amplitude=float(amplitude),
                                  estimator=estimator, users=int(users), snr_db=parse_list(snr))
        except ValueError as e:
            st.error(f"❌ Cannot parse a list: {str(e)}")
            return
        run_experiment("estimation", config)

    stored = st.session_state.results.get("estimation")
    if stored:
        frame = stored[0]["estimation"]
        fig = go.Figure()
        for column, name in (("predicted_var", "σ_N²/(A_t² N_t)"), ("dl_noise_var", "DL noise part"),
                             ("dl_mse", "DL MSE"), ("ul_mse", "UL MSE")):
            fig.add_trace(go.Scatter(x=frame["snr_db"], y=frame[column], mode="lines+markers", name=name))
        fig.update_layout(title="Per-tap estimation error", xaxis_title="SNR [dB]", height=450)
        fig.update_yaxes(type="log")
        st.plotly_chart(fig, use_container_width=True)
        st.dataframe(frame, use_container_width=True)
        show_downloads("estimation")


def main():
    """Main application function"""
    apply_custom_css()
    initialize_session_state()
    shared = show_sidebar()

    st.markdown('<div class="main-header">📡 Time Reversal vs All-Rake</div>', unsafe_allow_html=True)
    tabs = st.tabs(["📉 BER", "⚖️ Equivalence", "🔗 Couplings", "📈 Mutual information", "🎯 Estimation"])
    with tabs[0]:
        show_ber_tab(shared)
    with tabs[1]:
        show_equivalence_tab(shared)
    with tabs[2]:
        show_couplings_tab(shared)
    with tabs[3]:
        show_mi_tab(shared)
    with tabs[4]:
        show_estimation_tab(shared)


if __name__ == "__main__":
    main()
