#pragma once
// Generated by tests/frozen/gen_mie.py; do not edit.

namespace frozen::mie {

struct Row {
  int tau, l;
  double ka, lambda, t_re, t_im;
};

inline constexpr Row rows[] = {
    {1, 1, 1.0, 4.5880378249839, -0.045351286587159152, 0.20807341827357119},
    {2, 1, 1.0, -1.5574077246549022, -0.29192658172642881, -0.45464871341284085},
    {1, 2, 1.0, 58.112590370666642, -0.00029602674446568155, 0.01720288093989616},
    {2, 2, 1.0, -32.909704916457452, -0.00092246780110692568, -0.030358143129362287},
    {1, 3, 1.0, 1847.9059172077503, -2.9284658274053336e-7, 0.00054115293308030064},
    {2, 3, 1.0, -1322.9906525737139, -5.7132890985909318e-7, -0.00075586280728871026},
    {1, 4, 1.0, 111668.07014802258, -8.0194018897106067e-11, 8.9551113276538883e-6},
    {2, 4, 1.0, -87646.922899482479, -1.3017472020781981e-10, -1.1409413665516487e-5},
    {1, 5, 1.0, 10797621.360701885, -8.5771659321365521e-15, 9.2612990083122133e-8},
    {2, 5, 1.0, -8909548.1584035844, -1.2597623966236537e-14, -1.122391374086436e-7},
    {1, 6, 1.0, 1520335674.6048079, -4.3263437896223374e-19, 6.5774948039677975e-10},
    {2, 6, 1.0, -1295582994.9767125, -5.9575750469056925e-19, -7.7185329220686054e-10},
    {1, 7, 1.0, 293212771374.68547, -1.1631460077099318e-23, 3.4104926443403039e-12},
    {2, 7, 1.0, -255607074676.82162, -1.5305737472626121e-23, -3.9122547811493721e-12},
    {1, 8, 1.0, 74152228130018.121, -1.8186603121255627e-28, 1.3485771435574469e-14},
    {2, 8, 1.0, -65746414340070.754, -2.313427294715997e-28, -1.5209954946402691e-14},
    {1, 1, 2.0, 0.80526824991737123, -0.60662791186408773, 0.48849819693782324},
    {2, 1, 2.0, -1.6179772190946187, -0.27640723694703541, -0.4472206125731917},
    {1, 2, 2.0, 3.698659664536459, -0.068119504406465459, 0.25195086331640738},
    {2, 2, 2.0, -1.6179772190946187, -0.27640723694703541, -0.4472206125731917},
    {1, 3, 2.0, 24.445245052043283, -0.0016706483628538149, 0.040839408625756431},
    {2, 3, 2.0, -13.901747834011605, -0.0051477774309903846, -0.071563103751244402},
    {1, 4, 2.0, 316.86675707449738, -9.9596096259344831e-6, 0.0031558692038978076},
    {2, 4, 2.0, -228.42321640928594, -1.9165104498563239e-5, -0.0043777548123818901},
    {1, 5, 2.0, 7055.1224141694323, -2.0090506413892962e-8, 0.00014174098211267098},
    {2, 5, 2.0, -5608.6897601077762, -3.1789020770332443e-8, -0.00017829475527841699},
    {1, 6, 2.0, 236188.3580644042, -1.7925984885618186e-11, 4.233908936821486e-6},
    {2, 6, 2.0, -197253.61552042413, -2.5701002002194538e-11, -5.0696155674305322e-6},
    {1, 7, 2.0, 10999860.994573102, -8.2646716875458813e-15, 9.0910239728788599e-8},
    {2, 7, 2.0, -9471152.3063736752, -1.1147933228725181e-14, -1.0558377351054023e-7},
    {1, 8, 2.0, 677835899.53540616, -2.1764608904553412e-18, 1.4752833254854273e-9},
    {2, 8, 2.0, -596089227.22403373, -2.8143457699288634e-18, -1.6776011951381244e-9},
};

}  // namespace frozen::mie
