"""Regenerate the frozen generator tables from a direct doubling recursion.

Independent of the C++ table builder: multiplies full coefficient vectors
with (a,b)(c,d) = (ac - conj(d) b, d a + b conj(c)) and reads off i_j i_k.
"""
import sys
from pathlib import Path


def conj(x):
    return [x[0]] + [-v for v in x[1:]]


def mul(x, y):
    n = len(x)
    if n == 1:
        return [x[0] * y[0]]
    h = n // 2
    a, b, c, d = x[:h], x[h:], y[:h], y[h:]
    left = [p - q for p, q in zip(mul(a, c), mul(conj(d), b))]
    right = [p + q for p, q in zip(mul(d, a), mul(b, conj(c)))]
    return left + right


def table(level):
    n = 1 << level
    rows = []
    for j in range(n):
        row = []
        for k in range(n):
            ej = [0] * n
            ek = [0] * n
            ej[j] = 1
            ek[k] = 1
            p = mul(ej, ek)
            idx = [i for i, v in enumerate(p) if v != 0]
            assert len(idx) == 1 and abs(p[idx[0]]) == 1
            row.append(("+" if p[idx[0]] > 0 else "-") + str(idx[0]))
        rows.append(row)
    return rows


def main(out_dir):
    for level in (2, 3, 4):
        n = 1 << level
        lines = ["j\\k," + ",".join(str(k) for k in range(n))]
        for j, row in enumerate(table(level)):
            lines.append(str(j) + "," + ",".join(row))
        Path(out_dir, f"generator_table_r{level}.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
