"""Central finite-difference gradient oracle shared by the unit and acceptance tests."""

import numpy as np

from pitchlab.diffnet.tensor import Tensor, no_grad


class KinkDominated(AssertionError):
    """Too many stencils straddled a kink; the draw should be replaced."""


def relative_error(a, b, floor=1e-6):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def grad_check(loss_fn, arrays: dict, rng, coords=4, eps=1e-4, kink_tol=1e-4):
    """Worst relative error between backprop and central differences.

    ``loss_fn`` maps a dict of Tensors to a scalar Tensor.  ``coords`` random
    entries of every array are perturbed by +-eps (float64 arrays expected).
    A coordinate whose central differences at eps and eps/2 disagree by
    more than ``kink_tol`` (relative) has a relu or max-pool kink inside the
    stencil; it is skipped and another entry is drawn.
    """
    tens = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    loss_fn(tens).backward()

    def evaluate():
        with no_grad():
            return float(loss_fn({n: Tensor(a) for n, a in arrays.items()}).data)

    worst = 0.0
    for k, v in arrays.items():
        g = tens[k].grad if tens[k].grad is not None else np.zeros_like(v)
        order = rng.permutation(v.size)
        want = min(coords, v.size)
        ana, num, skipped = [], [], 0
        for i in order:
            if len(num) == want:
                break
            orig = v.flat[i]
            diffs = []
            for h in (eps, eps / 2):
                v.flat[i] = orig + h
                fp = evaluate()
                v.flat[i] = orig - h
                fm = evaluate()
                diffs.append((fp - fm) / (2 * h))
            v.flat[i] = orig
            if abs(diffs[0] - diffs[1]) > kink_tol * max(abs(diffs[0]), abs(diffs[1])) + 1e-7:
                skipped += 1
                continue
            ana.append(np.asarray(g).flat[i])
            num.append(diffs[0])
        if skipped > max(want, 4):
            raise KinkDominated(f"{k}: {skipped} coordinates hit kinks")
        if num:
            worst = max(worst, relative_error(ana, num))
    return worst


def worst_over_draws(make_case, draws, rng, max_rejects=None, **kw):
    """Run ``grad_check`` on ``draws`` independent cases from ``make_case(rng)``.

    ``make_case`` returns (loss_fn, arrays).  Draws dominated by kinks are
    replaced, at most ``max_rejects`` times (default: ``draws``).
    """
    max_rejects = draws if max_rejects is None else max_rejects
    worst, done, rejects = 0.0, 0, 0
    while done < draws:
        loss_fn, arrays = make_case(rng)
        try:
            worst = max(worst, grad_check(loss_fn, arrays, rng, **kw))
        except KinkDominated:
            rejects += 1
            if rejects > max_rejects:
                raise
            continue
        done += 1
    return worst
