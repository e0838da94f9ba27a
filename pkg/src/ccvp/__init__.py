"""Optimality certificates (KKT, AKKT, BAKKT) and constraint qualifications for
smooth cone-constrained vector optimization problems."""
from .cone import Orthant, Product, SecondOrderCone, Zero
from .errors import (CCVPError, CertificateError, DivergenceError, NumericalError, ParseError,
                     PreconditionError, UnsupportedError, UsageError)
from .model import Polynomial, Problem, evaluate, load_problem, parse_expression, parse_problem
from .certify import (AkktCertificate, AkktReport, Claim, check_bakkt, convex_global_claim,
                      kkt_residual, search_kkt_multipliers, verify_akkt_certificate)
from .cq import check_mfcq, check_rcq, cq_report, distance_to_K0, probe_akkt_regularity
from .generate import PenaltyConfig, generate_akkt

__version__ = "0.1.0"
