#![allow(clippy::excessive_precision)]

/// Upper-tail probabilities of Student's t, from 80-digit quadrature of the
/// density.
pub const SF_ORACLE: [(f64, f64, f64); 54] = [
    (1.0, 0.1, 4.6827448256944643049e-1),
    (1.0, 0.5, 3.5241638234956672582e-1),
    (1.0, 1.0, 2.5e-1),
    (1.0, 2.0, 1.4758361765043327418e-1),
    (1.0, 3.0, 1.0241638234956672582e-1),
    (1.0, 5.0, 6.2832958189001183814e-2),
    (1.0, 10.0, 3.1725517430553569515e-2),
    (1.0, 13.77, 2.3075676962514997065e-2),
    (1.0, 30.0, 1.0606402405535423415e-2),
    (2.0, 0.1, 4.6473271920707008656e-1),
    (2.0, 0.5, 3.3333333333333333333e-1),
    (2.0, 1.0, 2.1132486540518711775e-1),
    (2.0, 2.0, 9.1751709536136983634e-2),
    (2.0, 3.0, 4.773298313335456603e-2),
    (2.0, 5.0, 1.8874775675311862909e-2),
    (2.0, 10.0, 4.9262285116628454234e-3),
    (2.0, 13.77, 2.6162725353365241054e-3),
    (2.0, 30.0, 5.5463134097982945636e-4),
    (5.0, 0.1, 4.6211507057733018723e-1),
    (5.0, 0.5, 3.1914943582046450335e-1),
    (5.0, 1.0, 1.816087338245613128e-1),
    (5.0, 2.0, 5.0969739414929178123e-2),
    (5.0, 3.0, 1.5049623948731286924e-2),
    (5.0, 5.0, 2.0523579900266612103e-3),
    (5.0, 10.0, 8.5473787871481795353e-5),
    (5.0, 13.77, 1.8128915833439295941e-5),
    (5.0, 30.0, 3.859324310248025993e-7),
    (10.0, 0.1, 4.6116035928220415974e-1),
    (10.0, 0.5, 3.1394680287148647135e-1),
    (10.0, 1.0, 1.7044656615102993634e-1),
    (10.0, 2.0, 3.6694017385370182809e-2),
    (10.0, 3.0, 6.6718275112847886034e-3),
    (10.0, 5.0, 2.6866680137822630854e-4),
    (10.0, 10.0, 7.9477658779820597717e-7),
    (10.0, 13.77, 3.9663985354917096144e-8),
    (10.0, 30.0, 1.9808961710156621352e-11),
    (30.0, 0.1, 4.6050480589513557804e-1),
    (30.0, 0.5, 3.1036150244256364298e-1),
    (30.0, 1.0, 1.6265430771301494562e-1),
    (30.0, 2.0, 2.731252248149155196e-2),
    (30.0, 3.0, 2.6949820328259733064e-3),
    (30.0, 5.0, 1.1648342733503897566e-5),
    (30.0, 10.0, 2.2876257041148065963e-11),
    (30.0, 13.77, 8.3263366878202640393e-15),
    (30.0, 30.0, 3.1258958153044439765e-24),
    (163.0, 0.1, 4.6023360600243851173e-1),
    (163.0, 0.5, 3.0887470277959664524e-1),
    (163.0, 1.0, 1.5939635584827077214e-1),
    (163.0, 2.0, 2.3580574306715717263e-2),
    (163.0, 3.0, 1.5619898300505620557e-3),
    (163.0, 5.0, 7.3441502820353024893e-7),
    (163.0, 10.0, 5.8456631889898413517e-19),
    (163.0, 13.77, 2.0659402445411333601e-29),
    (163.0, 30.0, 1.4476008585535570558e-68),
];
