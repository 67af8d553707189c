"""
Exact linear algebra over the rationals.

Matrices are plain lists of rows of fractions.Fraction.  Only the handful of
routines needed by the Gram, Laplacian and right-leg constructions live here:
pivoted LDL^T (positive definiteness certificates), Gauss-Jordan solves and
inverses, products, and conversion to floating point.
"""
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

Matrix = List[List[Fraction]]


class NotPositiveDefinite(ValueError):
    """Raised when a matrix that must be symmetric positive definite is not"""


class SingularMatrix(ValueError):
    """Raised by exact solves on singular systems"""


def to_fraction_matrix(rows: Sequence[Sequence]) -> Matrix:
    return [[Fraction(entry) for entry in row] for row in rows]


def identity(size: int) -> Matrix:
    return [[Fraction(int(i == j)) for j in range(size)] for i in range(size)]


def zeros(rows: int, cols: int) -> Matrix:
    return [[Fraction(0)] * cols for _ in range(rows)]


def transpose(matrix: Matrix) -> Matrix:
    return [list(column) for column in zip(*matrix)] if matrix else []


def matmul(left: Matrix, right: Matrix) -> Matrix:
    right_columns = transpose(right)
    return [
        [sum((a * b for a, b in zip(row, column)), Fraction(0)) for column in right_columns]
        for row in left
    ]


def matvec(matrix: Matrix, vector: Sequence[Fraction]) -> List[Fraction]:
    return [sum((a * b for a, b in zip(row, vector)), Fraction(0)) for row in matrix]


def is_symmetric(matrix: Matrix) -> bool:
    size = len(matrix)
    return all(len(row) == size for row in matrix) and all(
        matrix[i][j] == matrix[j][i] for i in range(size) for j in range(i)
    )


def to_array(matrix: Matrix) -> np.ndarray:
    """Floating point shadow of an exact matrix"""
    if not matrix:
        return np.zeros((0, 0))
    return np.array([[float(entry) for entry in row] for row in matrix], dtype=float)


def ldlt(matrix: Matrix) -> Tuple[List[int], Matrix, List[Fraction]]:
    """Symmetric pivoted LDL^T: P A P^T = L D L^T

    The pivot is the largest remaining diagonal entry.  Returns the
    permutation, the unit lower triangular L and the diagonal of D.  Raises
    NotPositiveDefinite as soon as the largest remaining pivot is not
    strictly positive, which certifies that A is not positive definite.
    """
    if not is_symmetric(matrix):
        raise NotPositiveDefinite("Matrix is not symmetric")

    size = len(matrix)
    work = [row[:] for row in matrix]
    perm = list(range(size))
    lower = identity(size)
    diagonal: List[Fraction] = []

    for k in range(size):
        pivot = max(range(k, size), key=lambda i: work[i][i])
        if work[pivot][pivot] <= 0:
            raise NotPositiveDefinite(f"Non-positive pivot {work[pivot][pivot]} at step {k}")
        if pivot != k:
            work[k], work[pivot] = work[pivot], work[k]
            for row in work:
                row[k], row[pivot] = row[pivot], row[k]
            perm[k], perm[pivot] = perm[pivot], perm[k]
            for j in range(k):
                lower[k][j], lower[pivot][j] = lower[pivot][j], lower[k][j]

        d = work[k][k]
        diagonal.append(d)
        for i in range(k + 1, size):
            factor = work[i][k] / d
            lower[i][k] = factor
            if factor:
                row_i, row_k = work[i], work[k]
                for j in range(k + 1, i + 1):
                    row_i[j] -= factor * row_k[j]
                    work[j][i] = row_i[j]
    return perm, lower, diagonal


def is_positive_definite(matrix: Matrix) -> bool:
    """Exact positive definiteness certificate through pivoted LDL^T"""
    try:
        ldlt(matrix)
    except NotPositiveDefinite:
        return False
    return True


def solve(matrix: Matrix, rhs: Matrix) -> Matrix:
    """Exact Gauss-Jordan solve of A X = B for square A; rhs given as rows"""
    size = len(matrix)
    if any(len(row) != size for row in matrix) or len(rhs) != size:
        raise ValueError("Dimension mismatch in exact solve")

    width = len(rhs[0]) if rhs else 0
    augmented = [matrix[i][:] + rhs[i][:] for i in range(size)]

    for col in range(size):
        pivot = next((r for r in range(col, size) if augmented[r][col] != 0), None)
        if pivot is None:
            raise SingularMatrix(f"Singular matrix at column {col}")
        augmented[col], augmented[pivot] = augmented[pivot], augmented[col]
        pivot_row = augmented[col]
        inverse_pivot = 1 / pivot_row[col]
        if inverse_pivot != 1:
            augmented[col] = pivot_row = [entry * inverse_pivot for entry in pivot_row]
        for r in range(size):
            if r != col and augmented[r][col] != 0:
                factor = augmented[r][col]
                row = augmented[r]
                augmented[r] = [a - factor * b for a, b in zip(row, pivot_row)]
    return [row[size : size + width] for row in augmented]


def inverse(matrix: Matrix) -> Matrix:
    return solve(matrix, identity(len(matrix)))
