/// Two-sided 95% Student t critical values `t_{0.975, df}` for `df = 1..=100`.
pub(crate) const T_975: [f64; 100] = [
    12.706204736174705, 4.302652729749464, 3.1824463052837095, 2.7764451051977943, 2.5705818356363155,
    2.44691185114497, 2.3646242515927853, 2.3060041352041667, 2.2621571627982053, 2.228138851986275,
    2.2009851600916397, 2.178812829667229, 2.1603686564627926, 2.144786687917804, 2.1314495455597755,
    2.1199052992212546, 2.109815577833317, 2.1009220402410387, 2.0930240544083096, 2.085963447265865,
    2.0796138447276804, 2.0738730679040263, 2.0686576104190486, 2.063898561628026, 2.0595385527532977,
    2.055529438642873, 2.0518305164802855, 2.048407141795245, 2.0452296421327043, 2.042272456301238,
    2.0395134463964086, 2.036933343460102, 2.034515297449339, 2.032244509317719, 2.0301079282503434,
    2.028094000980451, 2.0261924630291097, 2.02439416391197, 2.0226909200367613, 2.0210753903062733,
    2.0195409704413763, 2.018081702818445, 2.0166921992278244, 2.015367574443764, 2.0141033888808466,
    2.012895598919429, 2.011740513729766, 2.0106347576242323, 2.0095752371292397, 2.008559112100761,
    2.007583770315836, 2.0066468050616884, 2.005745995317869, 2.004879288188057, 2.004044783289146,
    2.0032407188478722, 2.0024654592910074, 2.001717484145236, 2.000995378088268, 2.0002978220142604,
    1.9996235849949398, 1.998971517033379, 1.9983405425207417, 1.997729654317693, 1.997137908392004,
    1.996564418952312, 1.9960083540252966, 1.995468931429844, 1.994945415107238, 1.9944371117711865,
    1.9939433678456258, 1.9934635666618723, 1.9929971258898551, 1.9925434951809327, 1.992102154002242,
    1.9916726096446644, 1.991254395388385, 1.9908470688116908, 1.990450210230129, 1.9900634212544461,
    1.9896863234569029, 1.9893185571365726, 1.9889597801751628, 1.9886096669757092, 1.988267907477222,
    1.9879342062390206, 1.9876082815890712, 1.9872898648311697, 1.9869786995062815, 1.9866745407037683,
    1.9863771544186182, 1.9860863169511305, 1.9858018143458234, 1.9855234418666043, 1.9852510035054982,
    1.9849843115224575, 1.9847231860139847, 1.9844674545084817, 1.9842169515864174, 1.9839715185235522,
];
