from src.models import beta_bernoulli
from src.models import gamma_poisson
from src.models import normal_gamma
from src.models import nig_regression
from src.models import logistic_regression
