"""Writes the two 3-atom laws on the 9-node grid and their W2 oracle."""
import itertools
import math
import pathlib
import random

N, L = 9, 8.0
h = 2 * L / (N - 1)
w = [h] * N
w[0] = w[-1] = h / 2
here = pathlib.Path(__file__).parent


def law(seed):
    rng = random.Random(seed)
    return [([round(rng.uniform(-1, 1), 3) for _ in range(N)], [round(rng.uniform(-1, 1), 3) for _ in range(N)])
            for _ in range(3)]


def write(name, atoms):
    d = here / name
    d.mkdir(exist_ok=True)
    with open(d / "atoms.csv", "w", newline="\n") as f:
        f.write("atom_index,component,grid_index,value\n")
        for j, (u, v) in enumerate(atoms):
            for c, vals in (("u", u), ("v", v)):
                for i, x in enumerate(vals):
                    f.write(f"{j},{c},{i},{x:.17g}\n")
    with open(d / "weights.csv", "w", newline="\n") as f:
        f.write("atom_index,weight\n")
        for j in range(len(atoms)):
            f.write(f"{j},{1 / 3:.17g}\n")


def cost(a, b):
    return sum(w[i] * ((a[0][i] - b[0][i]) ** 2 + (a[1][i] - b[1][i]) ** 2) for i in range(N))


a, b = law(11), law(23)
write("law_a", a)
write("law_b", b)
best = min(sum(cost(a[i], b[p[i]]) for i in range(3)) / 3 for p in itertools.permutations(range(3)))
(here / "w2_oracle.txt").write_text(f"{math.sqrt(best):.17g}\n")
print(f"{math.sqrt(best):.17g}")
