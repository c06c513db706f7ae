import numpy as np

from . fields import npfield, int64, float64, flag, text


class RecordMeta(type):

    def __new__(metacls, cls, bases, classdict):

        ## ignore the Record base class itself, the metaclass only applies to subclasses
        if cls == 'Record':
            return super().__new__(metacls, cls, bases, classdict)

        # all field declarations found in the class body go here, in declaration order
        cls_defs = {}

        for key, item in classdict.items():

            ## ignore any class attributes that aren't field declarations
            if not isinstance(item, npfield):
                continue

            ## error if any private variables are used in class definition, or if there is a naming collision
            if hasattr(np.ndarray, key) or hasattr(Record, key):
                raise RuntimeError('Protected field name: ({})'.format(key))

            cls_defs[key] = item

        if len(cls_defs) < 1:
            raise ValueError('Empty records not supported. Declare fields with sdebound.fields types.')

        # set the maximum string length of the items in the class. Used for printing
        classdict['_printwidth'] = max(len(k) for k in cls_defs.keys()) + 3

        classdict['_item_cls'] = {k: v.__class__ for k, v in cls_defs.items()}

        classdict['_cls_defs'] = cls_defs

        # remove all items from the class so they won't appear as members
        [classdict.pop(key) for key in cls_defs.keys() if key in classdict.keys()]

        return super().__new__(metacls, cls, bases, classdict)


class Record(np.ndarray, metaclass=RecordMeta):
    """ Structured numpy array with named, documented scalar fields.

        A record with shape () holds one row and its fields read back as python scalars; a record with
        shape (n,) is a table of n rows whose fields read back as 1D arrays. Rows are written with
        to_csv, and the field docs are exported with schema().

        Example:
            class SolutionVec(Record):
                x1 = float64(doc='time coordinate')
                ...

            sol = SolutionVec(x1=1.0)
            batch = SolutionVec(shape=(100,))
            batch.x1 = np.linspace(0, 1, 100)
    """

    def __new__(cls, input_=None, shape=(), **kwargs):

        dtype = cls.record_dtype()

        if input_ is not None:
            input_ = np.asarray(input_)
            obj = np.zeros(input_.shape, dtype=dtype).view(cls)
            for key in cls._cls_defs.keys():
                obj[key] = input_[key]
            return obj

        unknown = set(kwargs) - set(cls._cls_defs)
        if unknown:
            raise ValueError('record ({}) has no fields: {}'.format(cls.__name__, sorted(unknown)))

        obj = np.zeros(shape, dtype=dtype).view(cls)

        for key, item in cls._cls_defs.items():
            obj[key] = kwargs[key] if key in kwargs else item[0]

        return obj

    @classmethod
    def record_dtype(cls):
        return np.dtype([(k, v.dtype) for k, v in cls._cls_defs.items()])

    @classmethod
    def fields(cls):
        return tuple(cls._cls_defs.keys())

    @classmethod
    def schema(cls):
        """ Column documentation for this record: list of dicts with name, dtype, unit and doc.
        """
        return [
            dict(name=k, dtype=str(v.dtype), unit=v.unit, doc=v.doc)
            for k, v in cls._cls_defs.items()
        ]

    @classmethod
    def stack(cls, rows):
        """ Stacks single-row records (or dicts of field values) into a record of shape (n,).
        """
        obj = cls(shape=(len(rows),))
        for i, row in enumerate(rows):
            for key in cls._cls_defs.keys():
                obj[key][i] = row[key]
        return obj

    def __getitem__(self, key):

        if isinstance(key, str) and key in self._item_cls.keys():
            column = super().__getitem__(key).view(np.ndarray)
            ## 0-d records return python scalars
            return column[()] if column.ndim == 0 else column

        ret = super().__getitem__(key)

        if isinstance(ret, np.void):
            return np.array(ret, dtype=self.dtype).view(self.__class__)
        else:
            return ret

    def __getattribute__(self, key):

        if key in ['_item_cls', '_cls_defs']:
            return super().__getattribute__(key)

        elif key in self._item_cls.keys():
            return self[key]

        else:
            return super().__getattribute__(key)

    def __setattr__(self, key, value):
        if key in self._item_cls.keys():
            self[key] = value
        else:
            raise ValueError('record ({}) has no attribute: {}'.format(self.__class__.__name__, key))

    def values(self):
        """ Numeric fields stacked along a trailing axis as float64, e.g. shape (4,) for a SolutionVec.
        """
        return np.stack([np.asarray(self[k], dtype=np.float64) for k in self._cls_defs.keys()], axis=-1)

    def to_csv(self, filepath):
        """ Writes the rows to filepath with a header line of field names.
        """
        fmt = [self._item_cls[k].fmt for k in self._cls_defs.keys()]
        rows = np.atleast_1d(self.view(np.ndarray)).reshape(-1)
        np.savetxt(filepath, rows, fmt=fmt, delimiter=',', header=','.join(self._cls_defs.keys()), comments='')

    def __repr__(self):
        return str(self)

    def __str__(self, tabs=''):
        shape_str = self.shape if self.shape != () else ''
        build = 'Record {}: {}\n'.format(self.__class__.__name__, shape_str)
        tabs_item = tabs + '    '

        for k, v in self._cls_defs.items():
            item = np.asarray(self[k])
            key_tab = ' ' * (self._printwidth - len(str(k)) - 1)
            value_str = np.array2string(item, threshold=6, edgeitems=2) if item.ndim else str(item)
            build += tabs_item + str(k) + ':' + key_tab + str(item.dtype.name) + ' ' + value_str + '\n'

        return build[:-1]


class SolutionVec(Record):
    """ The four coordinates of the solution (or an approximation of it) at one time. """
    x1 = float64(doc='time coordinate, equals t')
    x2 = float64(doc='int_0^min(t,tau1) f dW')
    x3 = float64(doc='int_tau1^min(t,tau2) g dW')
    x4 = float64(doc='cos(X2(tau1) psi(X3(tau2))) int_tau2^t h ds')

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        obj = cls(shape=vec.shape[:-1])
        for i, key in enumerate(cls.fields()):
            obj[key] = vec[..., i]
        return obj


class RunRow(Record):
    """ One scheme run on one master path. """
    path_index = int64(doc='index of the master path; RNG stream key')
    nu = int64(doc='number of evaluations of W in (0, delta)')
    x1 = float64(doc='estimate of X1(T)')
    x2 = float64(doc='estimate of X2(T)')
    x3 = float64(doc='estimate of X3(T)')
    x4 = float64(doc='estimate of X4(T)')
    err = float64(doc='Euclidean error against the exact solution on the same path')


class CurveRow(Record):
    """ One (N, scheme) cell of the error curve. """
    N = int64(doc='declared evaluation budget')
    scheme = text(doc='scheme label')
    mean_abs_error = float64(doc='Monte Carlo mean of the Euclidean error')
    std_error = float64(doc='sample standard deviation / sqrt(num_paths)')
    measured_cost = float64(doc='Monte Carlo mean of nu')
    thm1_bound = float64(doc='raw lower bound c1 exp(-psi^-1(D_N)^2/beta) - c2/N (may be negative)')
    cor3_bound = float64(doc='kappa * a_N')


class BreakdownRow(Record):
    """ Per-coordinate companion of CurveRow. """
    N = int64(doc='declared evaluation budget')
    scheme = text(doc='scheme label')
    clamped_bound = float64(doc='max(0, thm1_bound)')
    x1_err = float64(doc='mean absolute error of coordinate 1')
    x2_err = float64(doc='mean absolute error of coordinate 2')
    x3_err = float64(doc='mean absolute error of coordinate 3')
    x4_err = float64(doc='mean absolute error of coordinate 4')


class BoundRow(Record):
    """ One point of an exported lower bound curve. """
    N = int64(doc='evaluation budget')
    raw_bound = float64(doc='c1 exp(-psi^-1(D_N)^2/beta) - c2/N')
    clamped_bound = float64(doc='max(0, raw_bound)')
    D_N = float64(doc='(1 + sqrt(96/(alpha min(delta, tau1/2)^3))) N^3')
    psi_inv_DN = float64(doc='psi^-1(D_N)')
    extrapolated_flag = flag(doc='1 if D_N lies beyond the last stored knot value')


class PathRow(Record):
    """ One grid point of an exported sample path. """
    path_index = int64(doc='index of the master path')
    t = float64(doc='time')
    w = float64(doc='W(t)')
    x1 = float64(doc='X1(t)')
    x2 = float64(doc='X2(t)')
    x3 = float64(doc='X3(t)')
    x4 = float64(doc='X4(t)')


class PathPoint(Record):
    """ One grid point of a Brownian path. """
    t = float64(doc='time')
    w = float64(doc='W(t)')


CSV_RECORDS = {
    'path.csv': PathPoint,
    'error_curve.csv': CurveRow,
    'error_breakdown.csv': BreakdownRow,
    'runs.csv': RunRow,
    'bound_curve.csv': BoundRow,
    'paths.csv': PathRow,
}
