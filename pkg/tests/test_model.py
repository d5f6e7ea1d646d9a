import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import cavtherm as ct
from cavtherm.model import ConfigurationError, ValidationError

from conftest import make_bath, make_homogeneous_ensemble

KT_300 = ct.KB_MEV_PER_K * 300.0


class TestPlanckOccupation:
    def test_exact_half_point(self):
        # energy = kT ln 2 makes the denominator exactly exp(ln 2) - 1 = 1
        e = KT_300 * math.log(2.0)
        assert ct.planck_occupation(e, 300.0) == pytest.approx(1.0, rel=1e-14)

    def test_room_temperature_20mev(self):
        # frozen from a 40-digit mpmath evaluation of 1/(exp(20/kT)-1)
        assert ct.planck_occupation(20.0, 300.0) == pytest.approx(0.856435431313, abs=1e-5)

    def test_small_energy_matches_series(self):
        # series oracle: n ~ kT/w - 1/2 for w << kT
        n = ct.planck_occupation(0.1, 300.0)
        series = KT_300 / 0.1 - 0.5
        assert n == pytest.approx(258.020312348, abs=0.01)
        assert n == pytest.approx(series, abs=5e-4)

    def test_monotone_decreasing_in_energy(self):
        energies = np.linspace(0.5, 60.0, 40)
        values = [ct.planck_occupation(e, 300.0) for e in energies]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert all(v > 0 for v in values)

    @given(st.floats(min_value=1e-6, max_value=50.0))
    def test_kms_identity(self, x):
        # (1 + n)/n = exp(hw/kT) to relative 1e-12 across the band
        e = x * KT_300
        n = ct.planck_occupation(e, 300.0)
        assert (1.0 + n) / n == pytest.approx(math.exp(x), rel=1e-12)

    @pytest.mark.parametrize("energy,temperature", [(0.0, 300.0), (-1.0, 300.0), (1.0, 0.0), (1.0, -5.0)])
    def test_domain_errors(self, energy, temperature):
        with pytest.raises(ValidationError):
            ct.planck_occupation(energy, temperature)


class TestPlanarDispersion:
    def test_k_zero_gives_omega0(self):
        modes = ct.build_planar_dispersion(2000.0, 1.0, [(0.0, 0.0)], 100.0, 0.0)
        assert modes.modes[0].energy == 2000.0

    def test_direct_substitution(self):
        modes = ct.build_planar_dispersion(2000.0, 1.0, [(2.0, 0.0)], 100.0, 0.0)
        assert modes.modes[0].energy == pytest.approx(2004.0)

    def test_full_grid_exhaustive(self):
        grid = ct.square_k_grid(11, 5.0)
        modes = ct.build_planar_dispersion(2000.0, 1.0, grid, 100.0, 0.0)
        assert len(modes) == 121
        # oracle: evaluate the dispersion over the whole grid directly
        expected = sorted(2000.0 + kx * kx + ky * ky for kx, ky in grid)
        np.testing.assert_allclose(modes.energies, expected, rtol=0)
        assert modes.energies.min() == 2000.0
        assert modes.energies.max() == 2050.0
        assert modes.modes[0].wavevector == (0.0, 0.0)

    def test_permutation_invariance(self):
        grid = ct.square_k_grid(5, 3.0)
        rng = np.random.default_rng(7)
        shuffled = [grid[i] for i in rng.permutation(len(grid))]
        a = ct.build_planar_dispersion(2000.0, 0.7, grid, 50.0, 0.1)
        b = ct.build_planar_dispersion(2000.0, 0.7, shuffled, 50.0, 0.1)
        assert a.modes == b.modes

    def test_duplicate_grid_points_rejected(self):
        with pytest.raises(ValidationError):
            ct.build_planar_dispersion(2000.0, 1.0, [(1.0, 0.0), (1.0, 0.0)], 1.0, 0.0)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValidationError):
            ct.build_planar_dispersion(2000.0, 1.0, [], 1.0, 0.0)


class TestExcitonLinewidth:
    def test_low_branch_a2_only(self):
        bath = make_bath(a2=200.0, gamma0=0.0)
        # T well below the crossover T* = 20 meV / kB = 232 K
        assert ct.exciton_linewidth(bath, 10.0) == pytest.approx(math.sqrt(200.0), rel=1e-12)

    def test_low_branch_inhomogeneous_only(self):
        bath = make_bath(a2=0.0, gamma0=10.0)
        assert ct.exciton_linewidth(bath, 50.0) == 10.0

    def test_high_branch(self):
        bath = make_bath(a2=0.0, gamma0=10.0, slope_c=1.0)
        assert ct.exciton_linewidth(bath, 300.0) == pytest.approx(20.0, rel=1e-12)

    def test_missing_slope_in_high_branch(self):
        bath = make_bath(slope_c=None)
        with pytest.raises(ConfigurationError):
            ct.exciton_linewidth(bath, 300.0)

    def test_hard_switch_at_crossover(self):
        bath = make_bath(a2=100.0, gamma0=0.0, slope_c=1.0)
        t_star = bath.crossover_temperature
        below = ct.exciton_linewidth(bath, t_star * 0.999)
        at = ct.exciton_linewidth(bath, t_star)
        assert below == pytest.approx(10.0, rel=1e-12)
        assert at == pytest.approx(math.sqrt(t_star), rel=1e-12)

    def test_diagnostic_reports_both_branches(self):
        bath = make_bath(a2=100.0, gamma0=5.0, slope_c=1.0)
        d = ct.linewidth_diagnostic(bath, bath.crossover_temperature * 1.05)
        assert d["branch"] == "high"
        assert d["near_crossover"]
        assert d["low_branch_value"] == pytest.approx(math.sqrt(125.0))
        assert d["high_branch_value"] is not None


class TestWeakCouplingReport:
    def test_zero_rabi_always_passes_first(self):
        modes = ct.CavityModeSet(modes=(ct.CavityMode(id=0, energy=2000.0, rabi=0.0, loss=0.0),))
        report = ct.validate_weak_coupling(modes, make_homogeneous_ensemble(), make_bath(gamma0=0.0))
        assert report.checks[0].rabi_below_broadening

    def test_strong_coupling_flagged(self):
        modes = ct.CavityModeSet(modes=(ct.CavityMode(id=0, energy=2000.0, rabi=100.0),))
        report = ct.validate_weak_coupling(modes, make_homogeneous_ensemble(), make_bath(gamma0=50.0))
        assert not report.checks[0].rabi_below_broadening
        assert not report.all_passed

    def test_margins(self):
        modes = ct.CavityModeSet(modes=(ct.CavityMode(id=0, energy=2000.0, rabi=10.0),))
        report = ct.validate_weak_coupling(
            modes, make_homogeneous_ensemble(exciton=2200.0), make_bath(gamma0=50.0)
        )
        check = report.checks[0]
        assert check.passed and report.all_passed
        assert check.margin_broadening == pytest.approx(40.0)
        assert check.margin_detuning == pytest.approx(150.0)


class TestConstructorInvariants:
    def test_mode_rejects_bad_values(self):
        with pytest.raises(ValidationError):
            ct.CavityMode(id=0, energy=-1.0, rabi=1.0)
        with pytest.raises(ValidationError):
            ct.CavityMode(id=0, energy=1.0, rabi=-1.0)
        with pytest.raises(ValidationError):
            ct.CavityMode(id=0, energy=1.0, rabi=1.0, loss=-0.5)

    def test_mode_set_ordering_and_ids(self):
        a = ct.CavityMode(id=0, energy=2010.0, rabi=1.0)
        b = ct.CavityMode(id=1, energy=2000.0, rabi=1.0)
        with pytest.raises(ValidationError):
            ct.CavityModeSet(modes=(a, b))
        with pytest.raises(ValidationError):
            ct.CavityModeSet(modes=(b, ct.CavityMode(id=1, energy=2010.0, rabi=1.0)))

    def test_mode_set_mixed_wavevectors(self):
        a = ct.CavityMode(id=0, energy=2000.0, rabi=1.0, wavevector=(0.0, 0.0))
        b = ct.CavityMode(id=1, energy=2010.0, rabi=1.0)
        with pytest.raises(ValidationError):
            ct.CavityModeSet(modes=(a, b))

    def test_ensemble_consistency(self):
        sp = ct.SpectralProduct.constant(0.1, 20.0)
        mol = ct.Molecule(exciton_energy=2200.0, vib_spectral_product=sp)
        # concentration * area must round to the molecule count
        with pytest.raises(ValidationError):
            ct.MolecularEnsemble.homogeneous(mol, 10, concentration=100.0, area=1.0)
        ok = ct.MolecularEnsemble.homogeneous(mol, 100, concentration=100.0, area=1.0)
        assert ok.n_molecules == 100

    def test_bath_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            ct.VibrationalBath(temperature=0.0, mlfv_cutoff=20.0, a2=1.0)
        with pytest.raises(ValidationError):
            ct.VibrationalBath(temperature=300.0, mlfv_cutoff=0.0, a2=1.0)
        with pytest.raises(ValidationError):
            ct.VibrationalBath(temperature=300.0, mlfv_cutoff=20.0, a2=-1.0)

    def test_types_are_immutable(self):
        mode = ct.CavityMode(id=0, energy=2000.0, rabi=1.0)
        with pytest.raises(AttributeError):
            mode.energy = 1.0


class TestSerializationRoundTrip:
    def test_mode_set(self):
        modes = ct.build_planar_dispersion(2000.0, 1.0, ct.square_k_grid(3, 2.0), 100.0, 0.5)
        again = ct.CavityModeSet.from_dict(modes.to_dict())
        assert again == modes

    @pytest.mark.parametrize("sp", [
        ct.SpectralProduct.linewidth_matched(200.0, 20.0),
        ct.SpectralProduct.constant(0.25, 20.0),
        ct.SpectralProduct.tabulated([1.0, 10.0, 20.0], [0.1, 0.4, 0.2]),
    ])
    def test_spectral_products(self, sp):
        again = ct.SpectralProduct.from_dict(sp.to_dict())
        assert again == sp
        for w in (0.5, 5.0, 19.0, 25.0):
            assert again(w) == sp(w)

    def test_custom_spectral_product_not_serializable(self):
        sp = ct.SpectralProduct.custom(lambda w: 0.1, 20.0)
        assert sp(5.0) == 0.1
        with pytest.raises(ValidationError):
            sp.to_dict()

    def test_molecule_and_ensembles(self):
        sp = ct.SpectralProduct.linewidth_matched(200.0, 20.0)
        mol = ct.Molecule(
            exciton_energy=2200.0, vib_spectral_product=sp,
            couplings=[1.0, 2.0], phases=[0.0, 0.5],
        )
        again = ct.Molecule.from_dict(mol.to_dict())
        assert again.exciton_energy == mol.exciton_energy
        np.testing.assert_array_equal(again.couplings, mol.couplings)
        np.testing.assert_array_equal(again.phases, mol.phases)

        homog = ct.MolecularEnsemble.homogeneous(mol, 50, concentration=10.0, area=5.0)
        again = ct.MolecularEnsemble.from_dict(homog.to_dict())
        assert again.n_molecules == 50 and again.concentration == 10.0

        listed = ct.MolecularEnsemble.from_molecules([mol, mol], molecule_size=8.0)
        again = ct.MolecularEnsemble.from_dict(listed.to_dict())
        assert again.n_molecules == 2 and again.molecule_size == 8.0

    def test_bath(self):
        bath = make_bath()
        assert ct.VibrationalBath.from_dict(bath.to_dict()) == bath


def test_wavevector_bound_from_molecule_size():
    # l = 10 nm -> 2*pi / 0.01 um = 628.3 1/um
    ens = make_homogeneous_ensemble()
    assert ens.wavevector_bound() == pytest.approx(628.3185307, rel=1e-9)
