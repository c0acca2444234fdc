"""Compare the compiled and numpy conv/max-pool kernels.

    python benchmarks/bench_kernels.py [--docs 200] [--repeat 5]

Encodes synthetic tri-letter and pretrained-vector documents with each
backend, checks the outputs agree, and prints per-call timings.
"""

import argparse
import time

import numpy as np

from semrec import _pykernels
from semrec.encoder import ModelConfig, ModelParameters
from semrec.synthetic import SyntheticSpec, generate, to_labeled
from semrec.text import build_vocab
from semrec.wordrep import PretrainedRepr, TriLetterRepr

try:
    from semrec import _ckernels
except ImportError:
    _ckernels = None


def _cases(n_docs):
    corpus = generate(SyntheticSpec(seed=0, doc_length=40, vocab_per_cluster=40))
    docs = list(to_labeled(corpus).docs.values())[:n_docs]
    tri = TriLetterRepr(build_vocab(w for d in docs for w in d))
    for name, repr_ in (("triletter", tri), ("pretrained", PretrainedRepr(corpus.vectors))):
        params = ModelParameters.initialize("shared", repr_, ModelConfig(word_dim=repr_.word_dim), seed=0)
        yield name, params.doc_tower, [params.featurize(d) for d in docs]


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the numpy backend only")

    print(f"{'repr':<11}{'kernel':<10}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, tower, feats in _cases(args.docs):
        W, b = tower.conv_weights, tower.conv_bias
        g = np.linspace(-1.0, 1.0, W.shape[0])
        times = {"forward": {}, "backward": {}}
        results = {}
        for bname, mod in backends.items():
            outs = [mod.conv_pool_forward(f.indptr, f.indices, f.values, W, b) for f in feats]

            def run_fwd(mod=mod):
                for f in feats:
                    mod.conv_pool_forward(f.indptr, f.indices, f.values, W, b)

            def run_bwd(mod=mod, outs=outs):
                dW, db = np.zeros_like(W), np.zeros_like(b)
                for f, (_, arg) in zip(feats, outs):
                    mod.conv_pool_backward(f.indptr, f.indices, f.values, arg, g, dW, db)
                return dW

            times["forward"][bname] = _time(run_fwd, args.repeat)
            times["backward"][bname] = _time(run_bwd, args.repeat)
            results[bname] = (outs, run_bwd())
        if "cython" in results:
            (py_out, py_dw), (cy_out, cy_dw) = results["python"], results["cython"]
            assert all(np.array_equal(p[1], c[1]) and np.allclose(p[0], c[0], atol=1e-12)
                       for p, c in zip(py_out, cy_out)), "forward outputs differ"
            assert np.allclose(py_dw, cy_dw, atol=1e-10), "backward outputs differ"
        for kernel, t in times.items():
            per_doc = "".join(f"{v / len(feats) * 1e6:>11.1f} us" for v in t.values())
            speed = f"{t['python'] / t['cython']:>9.1f}x" if "cython" in t else ""
            print(f"{name:<11}{kernel:<10}{per_doc}{speed}")

if __name__ == "__main__":
    main()
