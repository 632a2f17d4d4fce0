// Generated once from a seeded normal distribution (sigma = 31/5 px),
// rejecting points outside a 13 px radius. Each row: x1, y1, x2, y2.
pub(super) const PATTERN: [[i8; 4]; 256] = [
    [-6, -8, 3, 2], [8, -2, -3, -4], [-6, -11, 3, 9], [4, 5, 7, -1],
    [-1, 9, -6, -6], [0, -8, -6, 4], [7, -6, 9, -6], [11, 1, -3, 2],
    [-10, -4, 6, 4], [3, -7, -9, 1], [2, 0, -4, -5], [-1, -11, 6, 4],
    [-7, 9, 1, -8], [-3, -3, 4, -10], [3, 0, 9, 9], [-2, 0, 4, 10],
    [-5, 5, -6, 2], [7, -4, -3, 0], [8, -9, 5, 6], [3, 4, -5, -4],
    [-6, 9, -2, 5], [-5, -7, 1, 2], [-5, -4, 4, -6], [-12, -3, 3, 7],
    [4, 2, 2, 0], [0, 8, 2, 7], [9, 3, 4, -3], [9, -5, -3, -8],
    [-9, 5, 3, -5], [8, 4, 11, -6], [10, -3, 1, 2], [2, -4, 4, 1],
    [1, -2, -2, -2], [-5, 10, -5, -7], [-6, 8, 3, -4], [-3, -3, 0, 3],
    [6, 4, 1, 8], [3, -6, -2, -1], [-8, -9, -6, -11], [7, 7, -5, -2],
    [7, 5, 4, -8], [-1, 3, -3, -5], [1, 0, 4, -6], [-4, -3, 7, -6],
    [9, 6, 0, -4], [3, -11, 8, -4], [1, -2, 3, -2], [-7, -4, 6, -11],
    [-6, 6, -4, -3], [-5, 8, 3, -3], [-6, -11, 2, 0], [-3, -12, 8, -5],
    [0, -6, -7, 4], [-1, -2, 12, 3], [0, 1, 2, 8], [2, -9, -4, -2],
    [1, -1, 2, 2], [-1, -3, -4, -9], [-3, -5, -4, -9], [2, 0, 1, -4],
    [2, 5, 1, -3], [-3, 3, -2, 3], [3, 4, 5, 4], [4, 1, 1, 7],
    [-5, 1, 3, -1], [-4, 1, -1, -3], [6, 2, -5, 6], [0, 0, -5, -4],
    [4, 7, 3, -11], [-3, 11, 2, 2], [1, -9, -6, 4], [-4, 3, 1, -4],
    [0, 2, -4, -3], [5, -12, -4, 12], [4, 1, 11, -2], [0, 8, -6, -8],
    [3, -4, 5, -4], [-5, 9, 0, 0], [-6, -6, 2, 1], [-7, 3, -2, 7],
    [0, 3, 3, -1], [-4, 6, 6, 3], [-2, 0, -5, -5], [-2, 5, 2, -1],
    [-1, 0, -1, -4], [-10, 5, 0, 4], [9, 8, 1, -4], [2, -9, -6, 6],
    [-4, 0, 0, 6], [1, -7, 7, -10], [-9, 8, -7, -7], [-1, -1, 2, -8],
    [6, -11, -3, 9], [0, 6, 2, -1], [8, -6, -5, 4], [-4, -2, -10, -2],
    [-6, -2, 5, 8], [7, -9, 0, 9], [8, 8, 5, 12], [3, -1, -7, -8],
    [2, -2, 9, -4], [3, -4, -3, -11], [-3, -1, -6, 3], [-5, 11, -12, -3],
    [-2, -2, -4, -5], [1, -5, -5, 5], [-1, 5, 0, 12], [-2, 0, -2, -7],
    [-1, 10, 0, -12], [-5, -3, -1, -2], [1, -7, 3, -4], [9, 2, 2, -7],
    [-8, -7, -5, 5], [0, 7, -3, -5], [5, 7, -5, -1], [3, 9, 7, 5],
    [-1, 8, -1, -4], [3, 2, 8, -10], [-2, 1, 1, 6], [2, 6, 1, 3],
    [-3, 8, -9, -7], [0, -4, 9, -1], [-1, 8, -2, 0], [-4, -2, 1, 6],
    [8, -1, -6, -5], [-2, 3, -8, 5], [-5, -9, 6, -6], [-5, 6, -3, -2],
    [2, -11, 3, -10], [0, -6, 8, 9], [-7, -2, -4, -4], [1, 2, -8, -1],
    [-6, 5, -2, 11], [-2, 6, -7, -4], [2, 9, 3, -8], [-6, -2, 0, 1],
    [-7, -3, 1, 5], [2, 4, -3, 12], [-12, -2, 5, 2], [-4, 3, -6, -1],
    [6, -9, 5, -1], [6, 8, -9, 0], [7, -3, -3, 7], [-1, -8, -2, 2],
    [8, -8, -1, -3], [5, 1, 0, -9], [1, 1, -2, 2], [10, -6, 3, 4],
    [-5, 6, -6, -3], [-6, 4, 2, -9], [-7, -2, 1, -7], [-3, -4, -2, -11],
    [-4, 2, -2, -4], [6, -4, 2, -8], [0, -3, -4, -4], [-10, -3, 9, -1],
    [-2, 2, 2, 1], [8, -9, 1, -7], [0, 4, -4, 3], [-4, -1, -3, 0],
    [-3, -6, -3, -4], [5, 3, -2, -8], [7, 1, -4, 8], [-4, 2, -7, -3],
    [9, 1, -6, -10], [1, 1, -6, 3], [7, -9, -3, 4], [6, 10, 5, -1],
    [3, -7, 0, 8], [-2, -3, 7, 1], [2, 7, 5, -4], [7, 2, 2, -4],
    [5, 6, -7, -3], [1, -2, -5, -5], [-9, -5, -1, 11], [-5, 9, 5, -2],
    [8, -1, 6, 9], [-3, 7, 2, 6], [7, -3, 2, 9], [-2, 3, -2, -1],
    [-9, 0, 6, -1], [-3, -10, 2, 5], [0, 2, -1, 4], [-4, 5, -9, 1],
    [3, 7, 1, 1], [-3, 1, 8, -1], [-3, 4, -5, 3], [-4, -9, 6, -3],
    [-1, 7, -2, -6], [-12, 3, 4, 4], [1, 2, 1, 4], [6, -1, 1, -2],
    [4, 2, -3, 7], [-6, -1, -3, -5], [-3, 1, 8, 9], [-6, -5, 7, -9],
    [5, -9, 4, 6], [-2, 7, -5, -4], [8, -6, 5, 7], [1, 6, 3, -4],
    [7, -4, -3, 1], [-3, -4, -11, 1], [0, -7, 6, -2], [1, 9, -8, 6],
    [0, 7, 2, -7], [-10, 5, -1, 3], [-7, -7, 2, 0], [3, -3, 0, -9],
    [1, 0, -11, -2], [-5, 4, 2, -4], [6, 3, 0, 0], [-6, 8, 5, 6],
    [-1, 9, -3, 4], [-7, -3, 9, -6], [2, 0, 3, -4], [-8, 6, 2, -4],
    [1, 1, -1, 12], [2, 3, 3, -9], [-4, 2, -4, 1], [8, 1, -6, 5],
    [3, -2, 10, -7], [5, -4, 0, -10], [8, -1, -6, -4], [-11, -6, -1, 2],
    [-1, 1, -2, -5], [-6, -4, 4, 4], [9, -4, 7, 3], [-2, 6, -1, 11],
    [-3, -2, -6, 4], [-6, 1, 6, 9], [-10, 4, 8, 3], [6, -5, 7, 0],
    [9, -1, 4, 7], [0, -4, 1, -12], [-8, 2, 3, -1], [5, 6, 2, -10],
    [-6, -4, -4, 7], [-1, 11, -2, -4], [3, 6, 4, 9], [-4, 0, -3, 1],
    [7, -8, 2, 2], [0, -5, -8, 1], [-8, -8, -3, 7], [0, 2, -7, 3],
    [6, -4, 1, -2], [1, -2, -3, 9], [7, -7, 0, -8], [3, -2, 0, -4],
    [6, -6, 2, -2], [1, -3, 4, 1], [7, 6, -7, 7], [3, -3, -2, 11],
    [-7, 2, 6, 3], [8, 1, 0, -6], [-12, -2, 0, 7], [2, 12, -1, 10],
];
