"""Quasiconformal surface registration driven by Beltrami coefficients.

Maps between parameterized genus-0 surfaces are represented by their
Beltrami coefficient mu and recovered from it by the Beltrami holomorphic
flow; registration minimizes feature, landmark or shape energies over mu.
"""

__version__ = "0.1.0"

from .beltrami import (BeltramiCoefficient, DiscreteMap, compose_bc, compute_bc, dilation,  # noqa: E402
                       project_admissible, reflect_coefficient)
from .errors import *  # noqa: E402,F401,F403
from .flow import FlowSchedule, KernelMatrices, kernel_row, reconstruct, variation  # noqa: E402
from .mesh import DISK, SPHERE, PlanarEmbedding, TriMesh, discrete_curvatures, vertex_area  # noqa: E402
from .param import (MobiusTransform, PointLocator, fallback_disk_embed, normalize_disk,  # noqa: E402
                    sphere_embed_normalize, stereographic_embed)
from .registration import (EnergyParams, LandmarkSet, RegistrationRun, register_features,  # noqa: E402
                           register_geometry, register_landmarks)
