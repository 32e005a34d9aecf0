"""Structure-preserving finite element solver for compressible
heat-conducting viscous flow.

The spatial discretization couples a continuous vector velocity space
with discontinuous density/entropy spaces through antisymmetric
transport forms and temperature-weighted interior penalty heat forms;
the implicit time stepper uses difference-quotient energy derivatives.
Solutions conserve total mass and satisfy the energy balance to solver
precision and produce entropy cellwise.
"""

from .errors import (DegenerateLagrangianError, NonConvergenceError,
                     PositivityError)
from .forms import (Dirichlet, HeatParams, HomogeneousNeumann, Neumann,
                    ViscosityParams, entropy_rhs, form_a, form_b,
                    form_b_upwind, form_c, form_d, form_e)
from .gas import (GasParams, delta1, delta2, discrete_gradients, epsilon,
                  pressure, temperature)
from .mesh import Mesh, build_rectangle_mesh, jump_average_frame
from .quadrature import Quadrature, make_quadrature
from .spaces import (CgSpace, DgSpace, Discretization, FeFunction, evaluate,
                     gradient, mass_matrix, project_L2)
from .stepper import Residual, State, StepConfig, advance, residual

__all__ = [
    "DegenerateLagrangianError", "NonConvergenceError", "PositivityError",
    "Dirichlet", "HeatParams", "HomogeneousNeumann", "Neumann",
    "ViscosityParams", "entropy_rhs", "form_a", "form_b", "form_b_upwind",
    "form_c", "form_d", "form_e",
    "GasParams", "delta1", "delta2", "discrete_gradients", "epsilon",
    "pressure", "temperature",
    "Mesh", "build_rectangle_mesh", "jump_average_frame",
    "Quadrature", "make_quadrature",
    "CgSpace", "DgSpace", "Discretization", "FeFunction", "evaluate",
    "gradient", "mass_matrix", "project_L2",
    "Residual", "State", "StepConfig", "advance", "residual",
]

__version__ = "0.1.0"
