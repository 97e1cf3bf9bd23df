import numpy as np
import pytest

from japs.conic import (
    AffineFunctional, ConicSolution, Infeasible, LogAffineSdp,
    embed_blocks, hermitian_basis, kkt_residual, real_embedding, solve,
    strictly_feasible_start,
)

TOL = 1e-6


def one_var_log_problem():
    """maximize ln(x) s.t. x <= 2 over a 1x1 PSD block."""
    ident = np.eye(1, dtype=complex)
    return LogAffineSdp(
        block_dims=[1],
        log_terms=[(1.0, AffineFunctional([ident], 0.0))],
        linear_objective=[None],
        inequalities=[(AffineFunctional([ident], 0.0), 2.0)])


def trace_lp_problem():
    """maximize <diag(1,3), X> s.t. Tr X <= 1, X >= 0."""
    return LogAffineSdp(
        block_dims=[2],
        log_terms=[],
        linear_objective=[np.diag([1.0, 3.0]).astype(complex)],
        inequalities=[(AffineFunctional([np.eye(2, dtype=complex)], 0.0), 1.0)])


def two_log_problem():
    """maximize ln(1+x11) + ln(1+x22) s.t. Tr X <= 2."""
    e11 = np.diag([1.0, 0.0]).astype(complex)
    e22 = np.diag([0.0, 1.0]).astype(complex)
    return LogAffineSdp(
        block_dims=[2],
        log_terms=[(1.0, AffineFunctional([e11], 1.0)),
                   (1.0, AffineFunctional([e22], 1.0))],
        linear_objective=[None],
        inequalities=[(AffineFunctional([np.eye(2, dtype=complex)], 0.0), 2.0)])


def random_tiny_problem(rng, max_dim=4, max_blocks=2):
    """Random instance with PSD log coefficients and one trace budget, so the
    feasible set is easy to project onto for the gradient-ascent oracle."""
    nblocks = rng.integers(1, max_blocks + 1)
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(nblocks)]

    def rand_psd(n):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        m = a @ a.conj().T / n
        return m

    def rand_herm(n):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return (a + a.conj().T) / 2

    nlogs = int(rng.integers(1, 4))
    log_terms = []
    for _ in range(nlogs):
        fn = AffineFunctional([rand_psd(n) for n in dims], float(rng.uniform(0.5, 2.0)))
        log_terms.append((float(rng.uniform(0.2, 2.0)), fn))
    budget = float(rng.uniform(1.0, 4.0))
    lin = [rand_herm(n) * 0.3 for n in dims]
    ineq = [(AffineFunctional([np.eye(n, dtype=complex) for n in dims], 0.0), budget)]
    return LogAffineSdp(block_dims=dims, log_terms=log_terms,
                        linear_objective=lin, inequalities=ineq), budget


def project_trace_ball(blocks, budget):
    """Exact Euclidean projection onto {X_k >= 0, sum Tr X_k <= budget}."""
    eigs = [np.linalg.eigh((b + b.conj().T) / 2) for b in blocks]

    def clipped_trace(mu):
        return sum(np.clip(w - mu, 0.0, None).sum() for w, _ in eigs)

    if clipped_trace(0.0) <= budget:
        mu = 0.0
    else:
        lo, hi = 0.0, max(max(w.max() for w, _ in eigs), 0.0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if clipped_trace(mid) > budget:
                lo = mid
            else:
                hi = mid
        mu = hi
    out = []
    for w, v in eigs:
        out.append((v * np.clip(w - mu, 0.0, None)) @ v.conj().T)
    return out


def objective_value(prob, blocks):
    val = prob.offset
    for w, fn in prob.log_terms:
        arg = fn.value(blocks)
        if arg <= 0:
            return -np.inf
        val += w * np.log(arg)
    for k, c in enumerate(prob.linear_objective):
        if c is not None:
            val += float(np.real(np.trace(c @ blocks[k])))
    return val


def pga_oracle(prob, budget, steps=100_000, patience=300):
    """Projected gradient ascent with diminishing steps; returns the best
    feasible objective seen.  Early-exits once the running best stalls."""
    blocks = [np.eye(n, dtype=complex) * (budget / (2 * sum(prob.block_dims)))
              for n in prob.block_dims]
    best = objective_value(prob, blocks)
    stall = 0
    step0 = 0.5 * budget
    for it in range(1, steps + 1):
        grads = []
        for k, n in enumerate(prob.block_dims):
            g = np.zeros((n, n), dtype=complex)
            if prob.linear_objective[k] is not None:
                g += prob.linear_objective[k]
            for w, fn in prob.log_terms:
                if fn.coeffs[k] is not None:
                    g += w / fn.value(blocks) * fn.coeffs[k]
            grads.append(g)
        gnorm = np.sqrt(sum(np.linalg.norm(g) ** 2 for g in grads))
        alpha = step0 / (max(gnorm, 1e-12) * np.sqrt(it))
        cand = [b + alpha * g for b, g in zip(blocks, grads)]
        blocks = project_trace_ball(cand, budget)
        val = objective_value(prob, blocks)
        if val > best + 1e-13:
            best, stall = val, 0
        else:
            stall += 1
            if stall > patience:
                break
    return best


class TestAnalyticExamples:
    def test_single_log_boundary(self):
        sol = solve(one_var_log_problem(), TOL)
        assert sol.blocks[0][0, 0].real == pytest.approx(2.0, abs=5e-6)
        assert sol.objective == pytest.approx(np.log(2.0), abs=1e-6)

    def test_trace_lp(self):
        sol = solve(trace_lp_problem(), TOL)
        assert sol.objective == pytest.approx(3.0, abs=1e-6)
        x = sol.blocks[0]
        assert x[1, 1].real == pytest.approx(1.0, abs=1e-5)
        assert abs(x[0, 0]) < 1e-5

    def test_symmetric_logs(self):
        sol = solve(two_log_problem(), TOL)
        assert sol.objective == pytest.approx(2.0 * np.log(2.0), abs=1e-6)
        np.testing.assert_allclose(sol.blocks[0].real, np.eye(2), atol=1e-5)

    def test_kkt_residuals_within_tol(self):
        for prob in (one_var_log_problem(), trace_lp_problem(), two_log_problem()):
            sol = solve(prob, TOL)
            assert sol.kkt_residuals["stationarity"] <= TOL
            assert sol.kkt_residuals["primal_feasibility"] <= TOL
            assert sol.kkt_residuals["complementarity"] <= TOL


class TestKktResidual:
    def test_solver_output_passes(self):
        prob = trace_lp_problem()
        sol = solve(prob, TOL)
        res = kkt_residual(prob, sol.blocks, (sol.ineq_multipliers, sol.psd_multipliers))
        assert res["stationarity"] <= 1e-5
        assert res["primal_feasibility"] <= 1e-12
        assert res["complementarity"] <= 1e-5

    def test_hand_computed_multipliers(self):
        # optimum X = e2 e2^T, lambda = 3, dual slack diag(2, 0)
        prob = trace_lp_problem()
        sol = solve(prob, TOL)
        lam = np.array([3.0])
        dual = [np.diag([2.0, 0.0]).astype(complex)]
        res = kkt_residual(prob, sol.blocks, (lam, dual))
        hand = 3.0 * (1.0 - np.trace(sol.blocks[0]).real)
        hand += np.real(np.trace(dual[0] @ sol.blocks[0]))
        assert res["complementarity"] == pytest.approx(abs(hand), abs=1e-8)
        assert res["stationarity"] <= 1e-8  # exact analytic multipliers

    def test_perturbation_detected(self):
        prob = trace_lp_problem()
        sol = solve(prob, TOL)
        blocks = [sol.blocks[0] + 1e-2 * np.diag([1.0, -1.0])]
        res = kkt_residual(prob, blocks, (sol.ineq_multipliers, sol.psd_multipliers))
        assert (res["stationarity"] > TOL or res["complementarity"] > TOL
                or res["primal_feasibility"] > TOL)


class TestFeasibleStart:
    def test_power_only_construction(self):
        prob = two_log_problem()
        blocks = strictly_feasible_start(prob)
        total_dim = sum(prob.block_dims)
        np.testing.assert_allclose(blocks[0], (2.0 / (2 * total_dim)) * np.eye(2), atol=1e-12)
        used = np.trace(blocks[0]).real
        assert 2.0 - used == pytest.approx(1.0)

    def test_contradictory_bounds_infeasible(self):
        ident = np.eye(2, dtype=complex)
        prob = LogAffineSdp(
            block_dims=[2], log_terms=[], linear_objective=[ident],
            inequalities=[(AffineFunctional([ident], 0.0), 1.0),
                          (AffineFunctional([-ident], 0.0), -3.0)])
        with pytest.raises(Infeasible):
            strictly_feasible_start(prob)
        with pytest.raises(Infeasible):
            solve(prob, TOL)

    def test_negative_bound_needs_phase_one(self):
        # Tr X >= 1 (written as -Tr X <= -1) defeats the shrink heuristic but
        # phase-I inside solve() must still find an interior point.
        ident = np.eye(2, dtype=complex)
        prob = LogAffineSdp(
            block_dims=[2], log_terms=[],
            linear_objective=[-ident],
            inequalities=[(AffineFunctional([ident], 0.0), 4.0),
                          (AffineFunctional([-ident], 0.0), -1.0)])
        sol = solve(prob, TOL)
        assert sol.objective == pytest.approx(-1.0, abs=1e-5)


class TestOracleBattery:
    def test_matches_projected_gradient(self, rng):
        for trial in range(10):
            prob, budget = random_tiny_problem(rng)
            sol = solve(prob, TOL)
            ref = pga_oracle(prob, budget)
            scale = max(abs(ref), 1.0)
            assert sol.objective >= ref - 1e-4 * scale
            assert abs(sol.objective - ref) <= 1e-4 * scale

    def test_ascent_from_start(self, rng):
        for trial in range(5):
            prob, budget = random_tiny_problem(rng)
            start = strictly_feasible_start(prob)
            sol = solve(prob, TOL)
            assert sol.objective >= objective_value(prob, start) - 1e-10


class TestRealEmbedding:
    def test_embedding_preserves_values(self, rng):
        prob, _ = random_tiny_problem(rng)
        emb = real_embedding(prob)
        blocks = strictly_feasible_start(prob)
        eb = embed_blocks(blocks)
        for (w, fn), (we, fne) in zip(prob.log_terms, emb.log_terms):
            assert fn.value(blocks) == pytest.approx(fne.value(eb), rel=1e-12)
        assert objective_value(prob, blocks) == pytest.approx(objective_value(emb, eb), rel=1e-12)

    def test_same_optimum(self, rng):
        # gap <= 2e-9 on each side keeps the comparison inside 1e-8
        for trial in range(3):
            prob, _ = random_tiny_problem(rng)
            sol = solve(prob, 2e-9)
            sol_emb = solve(real_embedding(prob), 2e-9)
            assert sol.objective == pytest.approx(sol_emb.objective, abs=1e-8)


class TestValidation:
    def test_non_hermitian_coefficient_rejected(self):
        bad = np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex)
        with pytest.raises(ValueError):
            LogAffineSdp(block_dims=[2], log_terms=[],
                         linear_objective=[bad], inequalities=[])

    def test_negative_weight_rejected(self):
        ident = np.eye(1, dtype=complex)
        with pytest.raises(ValueError):
            LogAffineSdp(block_dims=[1],
                         log_terms=[(-1.0, AffineFunctional([ident], 1.0))],
                         linear_objective=[None], inequalities=[])

    def test_basis_orthonormal(self):
        for n in (1, 2, 4):
            for cx in (True, False):
                basis = hermitian_basis(n, cx)
                gram = np.einsum("aij,bji->ab", basis, basis).real
                np.testing.assert_allclose(gram, np.eye(len(basis)), atol=1e-12)


class TestDebugDump:
    def test_roundtrip_values_in_dump(self, rng, tmp_path):
        prob, _ = random_tiny_problem(rng)
        path = tmp_path / "problem.txt"
        from japs.conic import debug_dump
        debug_dump(prob, str(path))
        text = path.read_text()
        assert text.startswith("field complex")
        assert f"log_terms {len(prob.log_terms)}" in text
        assert "inequalities 1" in text
