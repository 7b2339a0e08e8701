"""
convex-smp - Strong maximum principle checks for parabolic systems in convex sets.

Simulates u_t = D(x,t,u) sum a_ij u_xixj + sum M_i(x,t,u) u_xi + phi(x,t,u) on a grid
and verifies, on the resulting trajectory, that u stays in a closed convex set K, that
touching the boundary forces flatness, and that the distance of u to the boundary of K
satisfies the expected supersolution inequality.
"""

__version__ = "0.1.0"
