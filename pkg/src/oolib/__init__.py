"""Object library environments, exact permutation-symmetry checks on tabular
MDPs, and slot world models trained with numpy autodiff."""

__version__ = "0.1.0"
