"""Fixed-point standard-normal CDF table (generated, do not edit).

769 Q16 values of Phi(z) on the Q6 grid z = -6.00 ... +6.00,
generated by tools/gen_phi_table.py from a 50-digit erf oracle.
"""

GRID_FRAC_BITS = 6
Z_LIMIT = 6
TABLE_SHA256 = "543cbdf85b8d1616580303f7f8c1a37f0bc107e19f8cd6468fa7c91ce2e9b5a9"

PHI_TABLE_Q16 = (
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 2, 2, 2, 2, 2, 2,
    2, 3, 3, 3, 3, 3, 3, 4, 4, 4,
    5, 5, 5, 5, 6, 6, 7, 7, 7, 8,
    8, 9, 9, 10, 11, 11, 12, 13, 14, 14,
    15, 16, 17, 18, 19, 20, 22, 23, 24, 26,
    27, 29, 30, 32, 34, 36, 38, 40, 42, 45,
    47, 50, 52, 55, 58, 61, 65, 68, 72, 76,
    80, 84, 88, 93, 98, 103, 108, 114, 120, 126,
    132, 139, 146, 153, 161, 169, 177, 186, 195, 205,
    215, 225, 236, 247, 259, 271, 284, 297, 311, 326,
    341, 356, 372, 389, 407, 425, 444, 464, 485, 506,
    528, 551, 575, 600, 626, 652, 680, 709, 738, 769,
    801, 834, 868, 904, 941, 979, 1018, 1059, 1101, 1144,
    1189, 1235, 1283, 1333, 1384, 1437, 1491, 1547, 1605, 1665,
    1726, 1790, 1855, 1923, 1992, 2064, 2137, 2213, 2291, 2371,
    2453, 2538, 2625, 2715, 2807, 2901, 2999, 3098, 3200, 3305,
    3413, 3524, 3637, 3753, 3872, 3994, 4119, 4247, 4378, 4512,
    4650, 4790, 4934, 5081, 5231, 5385, 5542, 5703, 5866, 6034,
    6205, 6379, 6557, 6739, 6924, 7113, 7305, 7502, 7701, 7905,
    8113, 8324, 8539, 8758, 8981, 9207, 9437, 9672, 9910, 10152,
    10398, 10647, 10901, 11158, 11420, 11685, 11954, 12227, 12503, 12784,
    13068, 13356, 13648, 13944, 14243, 14546, 14852, 15162, 15476, 15793,
    16114, 16439, 16766, 17097, 17432, 17769, 18110, 18454, 18801, 19152,
    19505, 19861, 20220, 20582, 20947, 21314, 21684, 22057, 22432, 22809,
    23189, 23570, 23955, 24341, 24729, 25119, 25510, 25904, 26299, 26696,
    27094, 27494, 27894, 28296, 28699, 29103, 29508, 29914, 30320, 30727,
    31135, 31543, 31951, 32359, 32768, 33177, 33585, 33993, 34401, 34809,
    35216, 35622, 36028, 36433, 36837, 37240, 37642, 38042, 38442, 38840,
    39237, 39632, 40026, 40417, 40807, 41195, 41581, 41966, 42347, 42727,
    43104, 43479, 43852, 44222, 44589, 44954, 45316, 45675, 46031, 46384,
    46735, 47082, 47426, 47767, 48104, 48439, 48770, 49097, 49422, 49743,
    50060, 50374, 50684, 50990, 51293, 51592, 51888, 52180, 52468, 52752,
    53033, 53309, 53582, 53851, 54116, 54378, 54635, 54889, 55138, 55384,
    55626, 55864, 56099, 56329, 56555, 56778, 56997, 57212, 57423, 57631,
    57835, 58034, 58231, 58423, 58612, 58797, 58979, 59157, 59331, 59502,
    59670, 59833, 59994, 60151, 60305, 60455, 60602, 60746, 60886, 61024,
    61158, 61289, 61417, 61542, 61664, 61783, 61899, 62012, 62123, 62231,
    62336, 62438, 62537, 62635, 62729, 62821, 62911, 62998, 63083, 63165,
    63245, 63323, 63399, 63472, 63544, 63613, 63681, 63746, 63810, 63871,
    63931, 63989, 64045, 64099, 64152, 64203, 64253, 64301, 64347, 64392,
    64435, 64477, 64518, 64557, 64595, 64632, 64668, 64702, 64735, 64767,
    64798, 64827, 64856, 64884, 64910, 64936, 64961, 64985, 65008, 65030,
    65051, 65072, 65092, 65111, 65129, 65147, 65164, 65180, 65195, 65210,
    65225, 65239, 65252, 65265, 65277, 65289, 65300, 65311, 65321, 65331,
    65341, 65350, 65359, 65367, 65375, 65383, 65390, 65397, 65404, 65410,
    65416, 65422, 65428, 65433, 65438, 65443, 65448, 65452, 65456, 65460,
    65464, 65468, 65471, 65475, 65478, 65481, 65484, 65486, 65489, 65491,
    65494, 65496, 65498, 65500, 65502, 65504, 65506, 65507, 65509, 65510,
    65512, 65513, 65514, 65516, 65517, 65518, 65519, 65520, 65521, 65522,
    65522, 65523, 65524, 65525, 65525, 65526, 65527, 65527, 65528, 65528,
    65529, 65529, 65529, 65530, 65530, 65531, 65531, 65531, 65531, 65532,
    65532, 65532, 65533, 65533, 65533, 65533, 65533, 65533, 65534, 65534,
    65534, 65534, 65534, 65534, 65534, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
    65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535, 65535,
)
