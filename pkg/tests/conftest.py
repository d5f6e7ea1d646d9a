import numpy as np
import pytest

import cavtherm as ct


def make_bath(temperature=300.0, mlfv_cutoff=20.0, a2=200.0, gamma0=10.0, slope_c=0.8):
    return ct.VibrationalBath(
        temperature=temperature,
        mlfv_cutoff=mlfv_cutoff,
        a2=a2,
        gamma0=gamma0,
        slope_c=slope_c,
    )


def make_homogeneous_ensemble(n_molecules=10000, exciton=2200.0, a2=200.0,
                              mlfv_cutoff=20.0, **kwargs):
    sp = ct.SpectralProduct.linewidth_matched(a2, mlfv_cutoff)
    mol = ct.Molecule(exciton_energy=exciton, vib_spectral_product=sp)
    return ct.MolecularEnsemble.homogeneous(mol, n_molecules, **kwargs)


def make_two_modes(e0=2000.0, e1=2010.0, rabi=100.0, loss=0.0):
    return ct.CavityModeSet(modes=(
        ct.CavityMode(id=0, energy=e0, rabi=rabi, loss=loss),
        ct.CavityMode(id=1, energy=e1, rabi=rabi, loss=loss),
    ))


def kms_pair_matrix(down, delta, temperature=300.0, e0=2000.0):
    """Hand-built 2-mode rate matrix satisfying detailed balance."""
    up = ct.kms_complete(down, delta, temperature)
    gamma = np.array([[0.0, down], [up, 0.0]])
    return ct.RateMatrix(
        gamma=gamma,
        mode_ids=(0, 1),
        mode_energies=(e0, e0 + delta),
        temperature=temperature,
        source="estimate",
    )


@pytest.fixture(scope="session")
def planar_scenario():
    """The 121-mode planar scenario used by the acceptance suite.

    ZERO degeneracy regularization: the grid has exactly degenerate shells,
    and only the ZERO policy keeps the Bose-Einstein vector an exact fixed
    point of the kinetics.
    """
    modes = ct.build_planar_dispersion(
        omega0=2000.0, alpha_cav=1.0, k_grid=ct.square_k_grid(11, 5.0),
        rabi=100.0, loss=0.01,
    )
    ensemble = make_homogeneous_ensemble()
    bath = make_bath()
    rates = ct.assemble_rate_matrix(
        modes, ensemble, bath, policy="estimate",
        reg=ct.RegularizationPolicy(mode="zero"),
    )
    return modes, ensemble, bath, rates
