"""Tests for the photonic control-chain model."""

import math

import numpy as np
import pytest

from photonic_qoc.exceptions import (
    ConstraintViolation,
    DimensionMismatch,
    InvalidPairError,
    SegmentationError,
)
from photonic_qoc.hwmodel import (
    CROSSTALK_PHASE,
    BeamLattice,
    ControlSchedule,
    CouplingFit,
    DrmzmConfig,
    HardwareModel,
    ImperfectionConfig,
    PicGeometry,
    SlmConfig,
    apply_slm,
    build_pic_matrix,
    coupling_coefficient,
    coupling_matrix,
    crosstalk_matrix,
    drmzm_derivatives,
    drmzm_transfer,
    field_at_atoms,
    field_map,
    forward_chain,
    leakage_matrix,
    pi_pulse_schedule,
    realize_geometry,
    sample_dynamics,
    segment_of_steps,
    trace_chain,
    transmission_to_voltages,
    triangular_sites,
    weak_scatter,
)


class TestGeometry:
    """Test fabricated gaps, lengths and lattice sites."""

    def test_second_neighbour_without_spread(self, exact_geometry):
        """Test gap and length of channels two apart with zero spread."""
        d, L = realize_geometry(exact_geometry, seed=0)

        assert d[0, 2] == pytest.approx(2.0)
        assert L[0, 2] == pytest.approx(726.0)
        assert d[0, 1] == pytest.approx(1.0)
        assert L[0, 1] == pytest.approx(660.0)

    def test_matrices_are_symmetric(self):
        """Test that perturbations are drawn once per pair."""
        d, L = realize_geometry(PicGeometry(n_channels=4), seed=3)

        np.testing.assert_array_equal(d, d.T)
        np.testing.assert_array_equal(L, L.T)
        assert np.all(np.diag(d) == 0.0)

    def test_perturbations_stay_in_range(self):
        """Test that fabricated values stay within the configured half-widths."""
        geom = PicGeometry(n_channels=5, delta_d_range=0.01, delta_L_range=1.0)
        d, L = realize_geometry(geom, seed=11)

        for m in range(5):
            for n in range(m + 1, 5):
                sep = n - m
                assert abs(d[m, n] - sep * geom.d0) <= 0.01
                assert abs(L[m, n] - geom.L0 * geom.s**sep) <= 1.0

    def test_same_seed_same_chip(self):
        """Test that the fabrication seed fixes the chip."""
        geom = PicGeometry()
        first = realize_geometry(geom, seed=5)
        second = realize_geometry(geom, seed=5)

        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_triangular_sites_are_equilateral(self):
        """Test that three sites form an equilateral triangle."""
        sites = triangular_sites(3, 3.0)
        pairs = [(0, 1), (0, 2), (1, 2)]
        dists = [np.linalg.norm(sites[i] - sites[j]) for i, j in pairs]

        assert dists == pytest.approx([3.0, 3.0, 3.0])

    def test_invalid_geometry(self):
        """Test geometry validation."""
        with pytest.raises(ValueError):
            PicGeometry(d0=0.0)
        with pytest.raises(DimensionMismatch):
            PicGeometry(n_channels=3, n_eff=[2.0, 2.0])


class TestCoupling:
    """Test the coupled-mode crosstalk coefficients."""

    def test_nearest_neighbour_amplitude(self):
        """Test the closed-form amplitude at d = 1 um and L = 600 um."""
        geom = PicGeometry(n_channels=2)
        d = np.array([[0.0, 1.0], [1.0, 0.0]])
        L = np.array([[0.0, 600.0], [600.0, 0.0]])

        c = coupling_coefficient(0, 1, d, L, CouplingFit(), geom)

        assert abs(c) == pytest.approx(0.35, abs=0.01)
        assert np.angle(c) == pytest.approx(CROSSTALK_PHASE)

    def test_self_coupling_rejected(self):
        """Test that a channel cannot couple with itself."""
        d, L = realize_geometry(PicGeometry(), seed=0)

        with pytest.raises(InvalidPairError):
            coupling_coefficient(1, 1, d, L, CouplingFit(), PicGeometry())

    def test_matrix_matches_pairwise(self):
        """Test that the vectorized matrix agrees with the scalar coefficient."""
        geom = PicGeometry(n_channels=4, n_eff=[2.0, 2.01, 2.0, 1.99])
        d, L = realize_geometry(geom, seed=2)
        C = coupling_matrix(d, L, CouplingFit(), geom)

        for m in range(4):
            assert C[m, m] == 0
            for n in range(4):
                if m != n:
                    expected = coupling_coefficient(m, n, d, L, CouplingFit(), geom)
                    assert C[m, n] == pytest.approx(expected, abs=1e-12)

    def test_wide_pitch_has_no_crosstalk(self):
        """Test that crosstalk vanishes as the pitch grows."""
        C = crosstalk_matrix(HardwareModel(pic=PicGeometry(d0=50.0)))

        assert np.max(np.abs(C)) < 1e-12

    def test_zero_kappa_has_no_crosstalk(self):
        """Test that a zero coupling prefactor removes crosstalk."""
        C = crosstalk_matrix(HardwareModel(coupling=CouplingFit(kappa0=0.0)))

        assert np.all(C == 0)


class TestDrmzm:
    """Test the two-ring modulator transfer function."""

    def test_quarter_phase(self):
        """Test one ring at half of v_pi."""
        T = drmzm_transfer(7.5, 0.0, DrmzmConfig())

        assert abs(T) == pytest.approx(math.sqrt(2) / 2)
        assert np.angle(T) == pytest.approx(math.pi / 4)

    def test_zero_volts_passes_everything(self):
        """Test that unbiased rings transmit the full field."""
        assert drmzm_transfer(0.0, 0.0, DrmzmConfig()) == pytest.approx(1.0)

    def test_insertion_loss_scales(self):
        """Test that insertion loss scales the transmission."""
        T = drmzm_transfer(0.0, 0.0, DrmzmConfig(insertion=0.8))

        assert T == pytest.approx(0.8)

    @pytest.mark.parametrize("volts", [15.5, -15.01, float("nan")])
    def test_out_of_range_voltage(self, volts):
        """Test that voltages outside [-15, 15] V are rejected."""
        with pytest.raises(ConstraintViolation):
            drmzm_transfer(volts, 0.0, DrmzmConfig())

    def test_push_pull_gives_real_transmission(self):
        """Test that push-pull voltages reproduce a requested transmission."""
        cfg = DrmzmConfig()
        targets = np.array([0.0, 0.3, 0.5, 1.0])
        v0, v1 = transmission_to_voltages(targets, cfg)

        np.testing.assert_allclose(v1, -v0)
        np.testing.assert_allclose(drmzm_transfer(v0, v1, cfg), targets, atol=1e-12)

    def test_unreachable_transmission(self):
        """Test that transmissions above the insertion are rejected."""
        with pytest.raises(ValueError):
            transmission_to_voltages(1.5, DrmzmConfig())

    def test_derivatives_match_differences(self):
        """Test analytic derivatives against central differences."""
        cfg = DrmzmConfig()
        v0, v1, h = 3.0, -2.0, 1e-6
        d0, d1 = drmzm_derivatives(v0, v1, cfg)

        fd0 = drmzm_transfer(v0 + h, v1, cfg) - drmzm_transfer(v0 - h, v1, cfg)
        fd0 = fd0 / (2 * h)
        fd1 = drmzm_transfer(v0, v1 + h, cfg) - drmzm_transfer(v0, v1 - h, cfg)
        fd1 = fd1 / (2 * h)

        assert d0 == pytest.approx(fd0, abs=1e-8)
        assert d1 == pytest.approx(fd1, abs=1e-8)

    def test_pic_matrix_layout(self):
        """Test that the PIC matrix holds transmissions on the diagonal."""
        cfg = DrmzmConfig()
        C = crosstalk_matrix(HardwareModel())
        volts = np.array([[7.5, 0.0], [0.0, 0.0], [5.0, -5.0]])
        M = build_pic_matrix(volts, C, cfg)

        expected = drmzm_transfer(volts[:, 0], volts[:, 1], cfg)
        np.testing.assert_allclose(np.diag(M), expected)
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_array_equal(M[off], C[off])

    def test_pic_matrix_shape_mismatch(self):
        """Test that voltages must cover every channel."""
        with pytest.raises(DimensionMismatch):
            build_pic_matrix(np.zeros((2, 2)), np.zeros((3, 3)), DrmzmConfig())


class TestFreeSpaceStages:
    """Test SLM, weak scattering and Gaussian beam leakage."""

    def test_slm_scales_rows(self):
        """Test that SLM factors multiply each mode of a matrix row by row."""
        slm = SlmConfig(amplitudes=[1.0, 0.5], phases=[0.0, math.pi / 2])
        out = apply_slm(np.ones((2, 3), dtype=complex), slm)

        np.testing.assert_allclose(out[0], np.ones(3))
        np.testing.assert_allclose(out[1], 0.5j * np.ones(3), atol=1e-15)

    def test_slm_default_is_identity(self):
        """Test that an empty SLM leaves modes unchanged."""
        modes = np.array([1.0 + 1j, 2.0, -1j])

        np.testing.assert_array_equal(apply_slm(modes, SlmConfig()), modes)

    def test_slm_wrong_length(self):
        """Test that SLM settings must cover every channel."""
        with pytest.raises(DimensionMismatch):
            apply_slm(np.ones(3), SlmConfig(amplitudes=[1.0, 1.0]))

    def test_weak_scatter_zero_eps(self):
        """Test that eps = 0 returns the input unchanged."""
        modes = np.array([1.0, 2.0, 3.0], dtype=complex)

        np.testing.assert_array_equal(weak_scatter(modes, 0.0, seed=1, stage=1), modes)

    def test_weak_scatter_stages_differ(self):
        """Test that the two scattering stages use different perturbations."""
        modes = np.ones(3, dtype=complex)
        first = weak_scatter(modes, 0.1, seed=1, stage=1)
        second = weak_scatter(modes, 0.1, seed=1, stage=2)

        assert not np.allclose(first, second)
        with pytest.raises(ValueError):
            weak_scatter(modes, 0.1, seed=1, stage=3)

    def test_neighbour_leakage(self):
        """Test the Gaussian tail of one beam at the neighbouring atom."""
        lattice = BeamLattice(w0=2.0, spacing=3.0)
        E = field_at_atoms(np.array([1.0, 0.0, 0.0]), lattice, lattice.w0)

        assert E[0] == pytest.approx(1.0)
        assert abs(E[1]) == pytest.approx(math.exp(-9 / 4))
        assert abs(E[1]) == pytest.approx(0.1054, abs=1e-4)

    def test_leakage_matrix_peaks_on_diagonal(self):
        """Test that each beam is brightest on its own atom."""
        sites = triangular_sites(3, 3.0)
        G = leakage_matrix(sites, sites, 2.0)

        np.testing.assert_allclose(np.diag(G), 1.0)
        assert np.all(G <= 1.0)

    def test_field_map_matches_atoms(self):
        """Test that the grid field at an atom equals the atom field."""
        lattice = BeamLattice()
        b = np.array([1.0, 0.5j, -0.2])
        sites = lattice.sites(3)
        plane = field_map(b, lattice, [sites[1, 0]], [sites[1, 1]])

        assert plane.shape == (1, 1)
        assert plane[0, 0] == pytest.approx(field_at_atoms(b, lattice, lattice.w0)[1])

    def test_lattice_size_mismatch(self):
        """Test that explicit atom positions must match the atom count."""
        lattice = BeamLattice(atom_positions=[[0.0, 0.0], [3.0, 0.0]])

        with pytest.raises(DimensionMismatch):
            lattice.sites(3)


class TestSchedules:
    """Test control schedules and segment alignment."""

    def test_shape_validation(self):
        """Test that schedules need a (channels, 2, segments) shape."""
        with pytest.raises(DimensionMismatch):
            ControlSchedule(np.zeros((3, 3, 4)))
        with pytest.raises(DimensionMismatch):
            ControlSchedule(np.zeros((3, 2)))

    def test_bound_validation(self):
        """Test that out-of-range schedules are rejected."""
        voltages = np.zeros((3, 2, 4))
        voltages[1, 0, 2] = 16.0

        with pytest.raises(ConstraintViolation):
            ControlSchedule(voltages)

    def test_from_flat_clamps(self):
        """Test that optimizer vectors are clamped into the bounds."""
        schedule = ControlSchedule.from_flat(np.full(24, 20.0), 3, 4)

        assert schedule.voltages.shape == (3, 2, 4)
        assert np.all(schedule.voltages == 15.0)

    def test_flat_round_trip(self, rng):
        """Test that flat() and from_flat() agree on the ordering."""
        schedule = ControlSchedule(rng.uniform(-15, 15, size=(3, 2, 5)))
        again = ControlSchedule.from_flat(schedule.flat(), 3, 5)

        np.testing.assert_array_equal(again.voltages, schedule.voltages)

    def test_segments_of_steps(self):
        """Test that each segment drives an equal block of steps."""
        segments = segment_of_steps(100, 10)

        assert segments[0] == 0
        assert segments[9] == 0
        assert segments[10] == 1
        assert segments[-1] == 9
        assert np.all(np.bincount(segments) == 10)

    @pytest.mark.parametrize("n_segments", [7, 0, 101])
    def test_misaligned_segments(self, n_segments):
        """Test that segments must divide the time grid."""
        with pytest.raises(SegmentationError):
            segment_of_steps(100, n_segments)

    def test_square_pi_pulse(self):
        """Test the naive pulse on one channel."""
        cfg = DrmzmConfig()
        schedule = pi_pulse_schedule(3, 10, 0, cfg)
        T = drmzm_transfer(schedule.voltages[:, 0], schedule.voltages[:, 1], cfg)

        np.testing.assert_allclose(T[0], 0.5, atol=1e-12)
        np.testing.assert_allclose(T[1:], 1.0)

    def test_gaussian_pi_pulse_area(self):
        """Test that the Gaussian pulse keeps the mean transmission."""
        cfg = DrmzmConfig()
        schedule = pi_pulse_schedule(3, 10, 1, cfg, shape="gaussian")
        T = drmzm_transfer(schedule.voltages[1, 0], schedule.voltages[1, 1], cfg)

        assert np.real(T).mean() == pytest.approx(0.5)

    def test_pi_pulse_rejections(self):
        """Test pulse validation."""
        with pytest.raises(ValueError):
            pi_pulse_schedule(3, 10, 3, DrmzmConfig())
        with pytest.raises(ValueError):
            pi_pulse_schedule(3, 10, 0, DrmzmConfig(), shape="triangle")


class TestDynamics:
    """Test time-varying hardware drifts."""

    def test_static_is_zero(self):
        """Test that disabled dynamics give zero drifts."""
        dyn = sample_dynamics(ImperfectionConfig(), t_steps=5)

        assert not np.any(dyn.delta_kappa)
        assert not np.any(dyn.delta_alpha)
        assert not np.any(dyn.delta_w)

    def test_dynamic_ranges_and_symmetry(self):
        """Test that drifts are symmetric per pair and bounded."""
        imp = ImperfectionConfig(
            dynamic=True, delta_kappa=0.5, delta_alpha=0.2, delta_w=0.1
        )
        dyn = sample_dynamics(imp, t_steps=50)

        transposed = np.transpose(dyn.delta_kappa, (0, 2, 1))
        np.testing.assert_array_equal(dyn.delta_kappa, transposed)
        assert np.max(np.abs(dyn.delta_kappa)) <= 0.5
        assert np.max(np.abs(dyn.delta_alpha)) <= 0.2
        assert np.max(np.abs(dyn.delta_w)) <= 0.1
        assert np.any(dyn.delta_w)


class TestChain:
    """Test the full forward chain."""

    def test_output_shape(self, hardware, rng):
        """Test that the chain returns one field per atom and step."""
        schedule = ControlSchedule(rng.uniform(-15, 15, size=(3, 2, 10)))

        assert forward_chain(schedule, hardware, t_steps=100).shape == (3, 100)

    def test_affine_in_transmissions(self, imperfect_hardware, rng):
        """Test that fields decompose into sensitivity and crosstalk offset."""
        schedule = ControlSchedule(rng.uniform(-15, 15, size=(3, 2, 5)))
        trace = trace_chain(schedule, imperfect_hardware, t_steps=10)

        for k in range(10):
            rebuilt = trace.sensitivity[k] @ trace.transmissions[k] + trace.offsets[k]
            np.testing.assert_allclose(trace.fields[:, k], rebuilt, atol=1e-13)

    def test_linear_in_inputs(self, imperfect_hardware, rng):
        """Test superposition of input amplitudes."""
        schedule = ControlSchedule(rng.uniform(-15, 15, size=(3, 2, 5)))
        a1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        a2 = rng.standard_normal(3) + 1j * rng.standard_normal(3)

        combined = forward_chain(schedule, imperfect_hardware, 2.0 * a1 - 1j * a2, 10)
        separate = 2.0 * forward_chain(schedule, imperfect_hardware, a1, 10)
        separate -= 1j * forward_chain(schedule, imperfect_hardware, a2, 10)

        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_isolated_channels_follow_transmission(self, isolated_hardware):
        """Test that without crosstalk or leakage each atom sees its own DRMZM."""
        schedule = pi_pulse_schedule(3, 10, 0, isolated_hardware.drmzm)
        fields = forward_chain(schedule, isolated_hardware, t_steps=10)

        np.testing.assert_allclose(fields[0], 0.5, atol=1e-12)
        np.testing.assert_allclose(fields[1:], 1.0, atol=1e-12)

    def test_schedule_must_match_channels(self, hardware):
        """Test that a schedule for the wrong channel count is rejected."""
        with pytest.raises(DimensionMismatch):
            forward_chain(ControlSchedule.zeros(2, 10), hardware, t_steps=10)

    def test_input_amplitude_length(self):
        """Test that a_in must have one entry per channel."""
        hw = HardwareModel(a_in=[1.0, 1.0])

        with pytest.raises(DimensionMismatch):
            forward_chain(ControlSchedule.zeros(3, 10), hw, t_steps=10)
